import pytest
import tomli

from sentinel.config import RunConfig, config_from_dict, dump_config, load_config
from sentinel.errors import ConfigError
from sentinel.model import CostModel

FIG4_FILE = """
k = 2

[costs]
c_N = 0.0
c_R = 1.0
c_W = 2.0
c_F = 8.0
cost_null = 0.0
cost_sense = 0.1
cost_reimage = 10.0
beta = 0.9
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_fig4_file_is_accepted(tmp_path):
    cfg = load_config(write(tmp_path, FIG4_FILE))
    assert cfg.costs == CostModel()
    assert cfg.k == 2


def test_defaults_match_the_reference_setting():
    cfg = RunConfig()
    assert cfg.costs.level_costs == (0.0, 1.0, 2.0, 8.0)
    assert (cfg.costs.cost_null, cfg.costs.cost_sense, cfg.costs.beta) == (0.0, 0.1, 0.9)
    assert cfg.solver.tolerance == 1e-9


def test_bare_file_uses_defaults(tmp_path):
    assert load_config(write(tmp_path, "")).to_dict() == RunConfig().to_dict()


def test_state_cost_ordering_is_enforced(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, "[costs]\nc_W = 9.0\n"))
    assert any("c_W < c_F" in v for v in exc.value.violations)


def test_discount_of_one_is_rejected(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, "[costs]\nbeta = 1.0\n"))
    assert any("beta" in v for v in exc.value.violations)


def test_every_violation_is_reported(tmp_path):
    text = """
k = 0
colour = "blue"

[costs]
c_W = 9.0
beta = 1.0
speed = 3

[solver]
tolerance = "tight"

[sweep]
r_step = -1.0
"""
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, text))
    msgs = " | ".join(exc.value.violations)
    for needle in ("k:", "'colour'", "'speed'", "solver.tolerance", "sweep.r_step"):
        assert needle in msgs
    assert len(exc.value.violations) >= 5


def test_cost_invariants_are_listed_together(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, "[costs]\nc_W = 9.0\nbeta = 1.0\n"))
    assert len(exc.value.violations) == 2


def test_parse_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "k = = 2\n"))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


@pytest.mark.parametrize("text", [
    FIG4_FILE,
    "k = 3\nworkers = 2\noutput_dir = 'out'\n[costs]\ncost_sense = [0.1, 0.2, 0.3]\n",
    "[observer]\nseed = ['NN', 'NR']\nstart_phase = 'decision'\n[model]\nh_admissible_on_w = false\n",
    "[observer]\nseed = 'all'\n[costs]\nstate_cost_timing = 'after_action'\n",
])
def test_round_trip(tmp_path, text):
    cfg = load_config(write(tmp_path, text))
    again = load_config(write(tmp_path, dump_config(cfg), "again.toml"))
    assert again == cfg
    assert tomli.loads(dump_config(again)) == cfg.to_dict()


def test_seed_validation():
    with pytest.raises(ConfigError):
        config_from_dict({"k": 2, "observer": {"seed": ["NNN"]}})
    with pytest.raises(ConfigError):
        config_from_dict({"k": 2, "observer": {"seed": ["NX"]}})
    with pytest.raises(ConfigError):
        config_from_dict({"observer": {"seed": []}})


def test_per_computer_costs_must_match_k():
    with pytest.raises(ConfigError):
        config_from_dict({"k": 2, "costs": {"cost_reimage": [1.0, 2.0, 3.0]}})


def test_digest_is_stable_and_sensitive():
    a, b = RunConfig(), RunConfig()
    assert a.digest() == b.digest()
    b.costs = b.costs.with_reimage_cost(11.0)
    assert a.digest() != b.digest()


def test_shipped_reference_config_equals_defaults():
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "configs" / "reference.toml"
    assert load_config(path) == RunConfig()
