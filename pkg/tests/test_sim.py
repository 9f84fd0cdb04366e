import json

import pytest

from sentinel import model
from sentinel.errors import ProtocolViolationError
from sentinel.model import (
    BoundaryAttack,
    CostModel,
    NetworkAttack,
    NullAttack,
    NullDefense,
    Observation,
    Phase,
    SecurityLevel,
    Sense,
    SystemState,
)
from sentinel.observer import ObserverState, build_observer_automaton, observer_step
from sentinel.sim import (
    Scripted,
    UniformRandom,
    WorstCaseGreedy,
    make_adversary,
    simulate,
    worst_case_greedy_event,
)
from sentinel.solver import Policy, solve

FIG4 = CostModel()


@pytest.fixture(scope="module")
def policy2():
    return solve(build_observer_automaton(2), FIG4)


@pytest.fixture(scope="module")
def policy1():
    return solve(build_observer_automaton(1), FIG4)


def null_policy(aut):
    p = solve(aut, FIG4)
    return Policy(aut, FIG4, [NullDefense()] * aut.n_states, p.optimal_sets, p.value)


def test_null_play_from_all_normal_costs_nothing():
    aut = build_observer_automaton(2, ObserverState.parse("NN"), start_phase="decision")
    trace = simulate(null_policy(aut), Scripted([NullAttack()] * 5), S0=0, Z0="NN", horizon=5)
    assert trace.discounted_total == 0.0
    assert [s.event for s in trace.steps] == [NullAttack()] * 5


@pytest.mark.parametrize("seed", range(5))
def test_bookkeeping(policy2, seed):
    aut = policy2.obs_aut
    trace = simulate(policy2, UniformRandom(seed), horizon=60)
    for prev, nxt in zip(trace.steps, trace.steps[1:]):
        Zt = model.apply_defender(SystemState(prev.state, Phase.DECISION), prev.action)
        assert nxt.state == model.apply_attacker(Zt, prev.event).levels
        assert aut.states[nxt.observer] == observer_step(aut.states[prev.observer], prev.action, prev.observation)
        assert nxt.state in aut.states[nxt.observer]
    assert trace.sound
    assert trace.recompute_total() == pytest.approx(trace.discounted_total, abs=1e-9)


def test_step_costs(policy2):
    trace = simulate(policy2, UniformRandom(3), horizon=30)
    for s in trace.steps:
        assert s.cost == model.state_cost(s.state, FIG4) + model.action_cost(s.action, FIG4)


def test_sense_readings_are_true(policy2):
    trace = simulate(policy2, UniformRandom(11), horizon=100)
    for s in trace.steps:
        if isinstance(s.action, Sense):
            assert s.observation.reading == SecurityLevel(s.state[s.action.computer - 1])
        else:
            assert s.observation.reading is None


@pytest.mark.parametrize("kind", ["uniform", "worst"])
def test_truncated_cost_below_value(policy2, kind):
    aut, cm = policy2.obs_aut, policy2.cm
    s0 = aut.entry[0]
    bound = policy2.value[s0] + cm.beta ** 100 * cm.value_bound(2)
    for seed in range(20):
        for Z0 in aut.states[s0].candidates:
            adv = make_adversary(kind, seed, policy2.value, cm=cm)
            trace = simulate(policy2, adv, Z0=Z0, horizon=100)
            assert trace.discounted_total <= bound + 1e-9
            assert trace.sound


def _greedy_oracle(value, aut, s, d, Zt, cm):
    scored = []
    for a, nxt in model.attacker_moves(Zt):
        reading = None
        s_next = aut.step(s, d, Observation(model.observe(a), reading))
        scored.append(((value[s_next], model.state_cost(nxt, cm)), a))
    best = max(k for k, _ in scored)
    return [a for k, a in scored if k == best][0]


def test_greedy_k1_matches_one_step_lookahead(policy1):
    aut, V = policy1.obs_aut, policy1.value
    for s, S in enumerate(aut.states):
        for Z in S.candidates:
            got = worst_case_greedy_event(V, aut, s, NullDefense(), Z, FIG4)
            assert got == _greedy_oracle(V, aut, s, NullDefense(), Z, FIG4)
    s = aut.index_of(ObserverState.parse("N|R"))
    assert worst_case_greedy_event(V, aut, s, NullDefense(), (0,), FIG4) == BoundaryAttack(1, 1)


def test_greedy_with_only_null_admissible(policy1):
    aut = policy1.obs_aut
    s = aut.index_of(ObserverState.parse("W|F"))
    assert worst_case_greedy_event(policy1.value, aut, s, NullDefense(), (3,), FIG4) == NullAttack()


def test_greedy_prefers_the_costlier_observed_successor(policy2):
    aut, V = policy2.obs_aut, policy2.value
    s = next(k for k, S in enumerate(aut.states) if (3, 0) in S)
    a = worst_case_greedy_event(V, aut, s, NullDefense(), (3, 0), FIG4)
    assert a in dict(model.attacker_moves((3, 0)))


def test_simulation_is_deterministic(policy2):
    a = simulate(policy2, UniformRandom(7), horizon=50)
    b = simulate(policy2, UniformRandom(7), horizon=50)
    assert a.to_jsonl() == b.to_jsonl()
    c = simulate(policy2, WorstCaseGreedy(policy2.value, FIG4), horizon=50)
    d = simulate(policy2, WorstCaseGreedy(policy2.value, FIG4), horizon=50)
    assert c.to_jsonl() == d.to_jsonl()


def test_inadmissible_script_event(policy2):
    with pytest.raises(ProtocolViolationError):
        simulate(policy2, Scripted([NetworkAttack(1, 2)]), horizon=3)


def test_script_runs_out_into_null(policy2):
    trace = simulate(policy2, Scripted([BoundaryAttack(1, 2)]), Z0="RN", horizon=4)
    assert trace.steps[0].event == BoundaryAttack(1, 2)
    assert all(s.event == NullAttack() for s in trace.steps[1:])


def test_z0_must_be_a_candidate(policy2):
    with pytest.raises(ValueError):
        simulate(policy2, UniformRandom(0), Z0="FF", horizon=3)


def test_trace_records(policy2):
    trace = simulate(policy2, UniformRandom(1), horizon=5)
    recs = [json.loads(line) for line in trace.to_jsonl(policy2.obs_aut).splitlines()]
    assert [r["t"] for r in recs] == list(range(5))
    assert set(recs[0]) >= {"state", "action", "event", "observed", "reading", "cost", "candidates"}


def test_unknown_adversary():
    with pytest.raises(ValueError):
        make_adversary("clairvoyant")
    with pytest.raises(ValueError):
        make_adversary("worst")


def test_uniform_covers_every_admissible_event(policy2):
    adv = UniformRandom(0)
    seen = {adv.choose(policy2.obs_aut, 0, NullDefense(), (0, 0)) for _ in range(200)}
    assert seen == {a for a, _ in model.attacker_moves((0, 0))}
