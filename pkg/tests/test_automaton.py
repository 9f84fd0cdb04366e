import io

import pytest

from sentinel import model
from sentinel.automaton import (
    build_system_automaton,
    event_marks,
    export_dot,
    export_fsm,
    parse_fsm,
    read_fsm,
)
from sentinel.errors import CapacityError
from sentinel.model import (
    BoundaryAttack,
    ExpandedSense,
    ModelFlags,
    NetworkAttack,
    NullAttack,
    NullDefense,
    Phase,
    Reimage,
    SystemState,
    X,
)


@pytest.mark.parametrize("K, n", [(1, 8), (2, 32), (3, 128)])
def test_state_count(K, n):
    aut = build_system_automaton(K)
    assert aut.n_states == n
    assert len(aut.decision_states) == len(aut.intermediate_states) == 4 ** K


def test_k1_defender_edges_per_decision_state():
    aut = build_system_automaton(1)
    for Z in aut.decision_states:
        events = [e for (s, e) in aut.defender_edges if s == Z]
        assert len(events) == 3
        assert NullDefense() in events and Reimage(1) in events
        (sense,) = [e for e in events if isinstance(e, ExpandedSense)]
        assert sense.reading == Z[1]


@pytest.mark.parametrize("K", [1, 2])
def test_edges_follow_the_dynamics(K):
    aut = build_system_automaton(K)
    for (Z, e), dst in aut.defender_edges.items():
        d = e.action if isinstance(e, ExpandedSense) else e
        assert dst == model.apply_defender(Z, d)
    for (Zt, a), dst in aut.attacker_edges.items():
        assert dst == model.apply_attacker(Zt, a)


@pytest.mark.parametrize("event, marks", [
    (NullDefense(), (True, True)),
    (Reimage(1), (True, True)),
    (ExpandedSense(1, model.SecurityLevel.N), (True, True)),
    (NullAttack(), (False, False)),
    (BoundaryAttack(1, 2), (False, False)),
    (NetworkAttack(1, 2), (False, True)),
    (X, (False, True)),
])
def test_event_marks(event, marks):
    assert event_marks(event) == marks


def test_capacity_budget():
    with pytest.raises(CapacityError):
        build_system_automaton(3, max_states=100)


def test_fsm_export_k1():
    text = export_fsm(build_system_automaton(1))
    lines = text.splitlines()
    header = [ln for ln in lines if ln.startswith("states ")]
    assert header and header[0].startswith("states 8 events ")
    assert sum(ln.startswith("state ") for ln in lines) == 8
    assert "trans d.N R1 i.N c o" in lines
    assert "trans i.N P1.1 d.R uc uo" in lines


@pytest.mark.parametrize("K, flags", [(1, ModelFlags()), (2, ModelFlags()), (2, ModelFlags(False))])
def test_fsm_round_trip(K, flags):
    aut = build_system_automaton(K, flags)
    back = parse_fsm(export_fsm(aut))
    assert back == aut


def test_fsm_export_is_deterministic(tmp_path):
    a, b = tmp_path / "a.fsm", tmp_path / "b.fsm"
    export_fsm(build_system_automaton(2), str(a))
    export_fsm(build_system_automaton(2), str(b))
    assert a.read_bytes() == b.read_bytes()


def test_export_to_stream():
    buf = io.StringIO()
    text = export_fsm(build_system_automaton(1), buf)
    assert buf.getvalue() == text


@pytest.mark.parametrize("bad", [
    "state d.N decision\n",  # no header
    "states 2 events 0\nstate d.N decision\n",  # wrong count
    "states 1 events 0\nstate d.N decision\nbogus line\n",
])
def test_read_fsm_rejects_malformed(bad):
    with pytest.raises(ValueError):
        read_fsm(bad)


def test_dot_export_k1():
    text = export_dot(build_system_automaton(1))
    nodes = [ln for ln in text.splitlines() if "shape=" in ln]
    assert len(nodes) == 8
    assert sum("shape=box" in ln for ln in nodes) == 4
    assert sum("shape=ellipse" in ln for ln in nodes) == 4
    assert 'label="R1"' in text and 'label="P1.1"' in text
    # unobservable attacker events are drawn dashed
    assert any("P1.1" in ln and "dashed" in ln for ln in text.splitlines())


def test_system_state_names_in_fsm():
    aut = build_system_automaton(2)
    names = {ln.split()[1] for ln in export_fsm(aut).splitlines() if ln.startswith("state ")}
    assert "d.FF" in names and "i.NN" in names
    assert SystemState.parse("FF", Phase.DECISION) in aut.decision_states
