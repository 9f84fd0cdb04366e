import csv
import json

import numpy as np
import pytest

from sentinel.errors import ConfigError
from sentinel.experiments import (
    KINDS,
    SweepResult,
    action_share,
    detect_thresholds,
    reimage_grid,
    sweep_reimage,
    write_sweep,
)
from sentinel.model import CostModel, NullDefense, Reimage, Sense
from sentinel.observer import build_observer_automaton
from sentinel.solver import solve

FIG4 = CostModel()


@pytest.fixture(scope="module")
def obs2():
    return build_observer_automaton(2)


@pytest.fixture(scope="module")
def coarse(obs2):
    return sweep_reimage(obs2, FIG4, 3.0, 30.0, 1.0)


@pytest.mark.parametrize("args, n, last", [
    ((3.0, 30.0, 0.2), 136, 30.0),
    ((0.2, 60.0, 0.2), 300, 60.0),
    ((5.0, 5.0, 1.0), 1, 5.0),
    ((1.0, 2.5, 1.0), 3, 2.5),
])
def test_grid(args, n, last):
    g = reimage_grid(*args)
    assert len(g) == n and g[-1] == last and g[0] == args[0]


@pytest.mark.parametrize("args", [(5.0, 3.0, 1.0), (1.0, 2.0, 0.0), (0.0, 2.0, 1.0)])
def test_bad_grid(args):
    with pytest.raises(ConfigError):
        reimage_grid(*args)


def test_grid_must_stay_above_sense_cost(obs2):
    with pytest.raises(ConfigError):
        sweep_reimage(obs2, FIG4, 0.1, 1.0, 0.1)


def test_dimensions(obs2, coarse):
    assert coarse.n_states == obs2.n_states
    assert all(len(row) == len(coarse.r_values) for row in coarse.actions)
    assert len(coarse.residuals) == len(coarse.iterations) == len(coarse.r_values)
    assert max(coarse.residuals) <= 1e-9


def test_single_point_is_one_solve(obs2):
    sw = sweep_reimage(obs2, FIG4, 10.0, 10.0, 0.2)
    assert sw.r_values == [10.0]
    assert [row[0] for row in sw.actions] == solve(obs2, FIG4).actions


def test_points_do_not_depend_on_the_grid(obs2, coarse):
    fine = sweep_reimage(obs2, FIG4, 9.0, 11.0, 0.5)
    j = coarse.r_values.index(10.0)
    k = fine.r_values.index(10.0)
    assert [row[j] for row in coarse.actions] == [row[k] for row in fine.actions]


def test_shares_sum_to_one(coarse):
    shares = action_share(coarse)
    assert set(shares) == set(KINDS)
    assert np.allclose(sum(shares.values()), 1.0, atol=1e-12, rtol=0)


def test_workers_give_identical_results(obs2):
    a = sweep_reimage(obs2, FIG4, 5.0, 8.0, 1.0, workers=1)
    b = sweep_reimage(obs2, FIG4, 5.0, 8.0, 1.0, workers=2)
    assert a.actions == b.actions


def test_threshold_detection_on_a_handmade_table():
    sw = SweepResult(
        r_values=[1.0, 2.0, 3.0, 4.0],
        actions=[
            [Reimage(1), Reimage(1), Sense(1), NullDefense()],
            [Reimage(1), Reimage(2), Reimage(2), Reimage(2)],
            [NullDefense(), Sense(1), NullDefense(), NullDefense()],
            [Sense(2), Reimage(2), Reimage(2), NullDefense()],
        ])
    rep = detect_thresholds(sw)
    assert [(s.state, s.r_switch) for s in rep.switches] == [
        (0, 2.5), (0, 3.5), (1, 1.5), (2, 1.5), (2, 2.5), (3, 1.5), (3, 3.5)]
    assert [(s.state, s.r_switch) for s in rep.reversals] == [(2, 1.5), (3, 1.5)]
    assert [(s.state, s.r_switch) for s in rep.null_escapes] == [(2, 1.5)]
    assert not rep.monotone and not rep.null_absorbing
    assert len(rep.kind_switches(1)) == 0


def test_k2_sweep_never_escalates(coarse):
    rep = detect_thresholds(coarse)
    assert rep.monotone and rep.null_absorbing


def test_write_sweep(tmp_path, coarse):
    paths = write_sweep(coarse, tmp_path / "out", {"k": 2})
    with open(paths["actions.csv"]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["state_index", "r", "action"]
    assert len(rows) == 1 + coarse.n_states * len(coarse.r_values)
    with open(paths["shares.csv"]) as fh:
        assert next(csv.reader(fh)) == ["r", "kind", "fraction"]
    with open(paths["thresholds.csv"]) as fh:
        assert next(csv.reader(fh)) == ["state_index", "r_switch", "from", "to"]
    doc = json.loads(open(paths["manifest.json"]).read())
    assert doc["k"] == 2 and doc["n_states"] == coarse.n_states

    again = write_sweep(coarse, tmp_path / "again", {"k": 2})
    for name in paths:
        assert open(paths[name], "rb").read() == open(again[name], "rb").read()
