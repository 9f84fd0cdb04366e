"""Closed-loop play of a defender policy against an attacker.

Each step charges the current state and the defender's action, lets the
policy pick an action from the current observer state, lets the adversary
pick one admissible event, and advances both the true state and the
observer with what the defender gets to see.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import model
from .errors import ProtocolViolationError
from .model import NullAttack, Observation, Sense, SecurityLevel
from .observer import ObserverState
from .solver import Policy, ValueFunction


@dataclass
class Step:
    t: int
    state: tuple
    observer: int
    action: object
    intermediate: tuple
    event: object
    observation: Observation
    cost: float

    def to_record(self, obs_aut=None) -> dict:
        rec = {
            "t": self.t,
            "state": model.levels_name(self.state),
            "observer": self.observer,
            "action": self.action.name,
            "intermediate": model.levels_name(self.intermediate),
            "event": self.event.name,
            "observed": self.observation.attack.name,
            "reading": None if self.observation.reading is None else self.observation.reading.name,
            "cost": self.cost,
        }
        if obs_aut is not None:
            rec["candidates"] = obs_aut.states[self.observer].name
        return rec


@dataclass
class Trace:
    steps: list
    discounted_total: float
    horizon: int
    beta: float
    final_state: tuple = ()
    final_observer: int = -1
    sound: bool = True

    def recompute_total(self) -> float:
        return float(sum(self.beta ** s.t * s.cost for s in self.steps))

    def to_jsonl(self, obs_aut=None) -> str:
        return "".join(json.dumps(s.to_record(obs_aut)) + "\n" for s in self.steps)


# -- adversaries --------------------------------------------------------------


class UniformRandom:
    """Picks uniformly among admissible events."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def choose(self, obs_aut, s, d, Zt):
        moves = model.attacker_moves(Zt, obs_aut.flags.h_admissible_on_w)
        return moves[int(self.rng.integers(len(moves)))][0]


class Scripted:
    """Plays a fixed event list, then the null event once the list runs out."""

    def __init__(self, events):
        self.events = list(events)
        self._pos = 0

    def choose(self, obs_aut, s, d, Zt):
        if self._pos < len(self.events):
            a = self.events[self._pos]
            self._pos += 1
            return a
        return NullAttack()


class WorstCaseGreedy:
    """One-step lookahead on the value function; see :func:`worst_case_greedy_event`."""

    def __init__(self, value: ValueFunction, cm=None):
        self.value = value
        self.cm = cm

    def choose(self, obs_aut, s, d, Zt):
        return worst_case_greedy_event(self.value, obs_aut, s, d, Zt, self.cm)


def worst_case_greedy_event(value, obs_aut, s, d, Zt, cm=None):
    """Admissible event whose resulting observer state has the largest value.

    Events that lead to equally valued observer states (every unobservable
    event leads to the same one) are separated by the cost of the true state
    they produce (level sum when no cost model is given), then by canonical
    event order.
    """
    if isinstance(s, ObserverState):
        s = obs_aut.index_of(s)
    Zt = tuple(int(z) for z in (Zt.levels if hasattr(Zt, "levels") else Zt))
    reading = SecurityLevel(Zt[d.computer - 1]) if isinstance(d, Sense) else None
    best, best_key = None, None
    for a, nxt in model.attacker_moves(Zt, obs_aut.flags.h_admissible_on_w):
        s_next = obs_aut.step(s, d, Observation(model.observe(a), reading))
        key = (float(value[s_next]), model.state_cost(nxt, cm) if cm is not None else sum(nxt))
        if best_key is None or key > best_key:
            best, best_key = a, key
    return best


ADVERSARIES = ("uniform", "worst", "script")


def make_adversary(kind: str, seed: int = 0, value=None, script=(), cm=None):
    if kind == "uniform":
        return UniformRandom(seed)
    if kind == "worst":
        if value is None:
            raise ValueError("the worst-case adversary needs a value function")
        return WorstCaseGreedy(value, cm)
    if kind == "script":
        return Scripted(script)
    raise ValueError(f"unknown adversary {kind!r}; expected one of {ADVERSARIES}")


# -- the loop -----------------------------------------------------------------


def simulate(policy: Policy, adversary, S0=None, Z0=None, horizon: int = 100) -> Trace:
    """Play ``horizon`` steps and return the trace.

    ``S0`` is an observer state (or its index) of the policy's automaton and
    defaults to its first entry state; ``Z0`` must be one of its candidates
    and defaults to the first.
    """
    obs_aut, cm = policy.obs_aut, policy.cm
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if S0 is None:
        s = obs_aut.entry[0]
    elif isinstance(S0, (int, np.integer)):
        s = int(S0)
    else:
        s = obs_aut.index_of(S0)
    cands = set(obs_aut.states[s].candidates)
    Z = obs_aut.states[s].candidates[0] if Z0 is None else tuple(
        int(z) for z in (Z0.levels if hasattr(Z0, "levels") else model.parse_levels(Z0) if isinstance(Z0, str) else Z0))
    if Z not in cands:
        raise ValueError(f"{model.levels_name(Z)} is not a candidate of {obs_aut.states[s]}")

    h_on_w = obs_aut.flags.h_admissible_on_w
    steps, total, sound = [], 0.0, True
    for t in range(horizon):
        d = policy(s)
        Zt = model.defender_effect(Z, d)
        if cm.state_cost_timing == "after_action":
            cost = model.state_cost(Zt, cm) + model.action_cost(d, cm)
        else:
            cost = model.state_cost(Z, cm) + model.action_cost(d, cm)
        a = adversary.choose(obs_aut, s, d, Zt)
        for event, nxt in model.attacker_moves(Zt, h_on_w):
            if event == a:
                break
        else:
            raise ProtocolViolationError(
                f"adversary played {getattr(a, 'name', a)} at {model.levels_name(Zt)}, which is not admissible")
        reading = SecurityLevel(Z[d.computer - 1]) if isinstance(d, Sense) else None
        obs = Observation(model.observe(a), reading)
        steps.append(Step(t, Z, s, d, Zt, a, obs, cost))
        total += cm.beta ** t * cost
        s = obs_aut.step(s, d, obs)
        Z = nxt
        if Z not in set(obs_aut.states[s].candidates):
            sound = False
    return Trace(steps, total, horizon, cm.beta, Z, s, sound)
