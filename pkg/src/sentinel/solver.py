"""Min-max value iteration over observer states and policy extraction.

The backup is

    TV(S) = min_d max_{Z in S} [ C_Z + cost(d) + beta * max_{S' in Q(S,d,Z)} V(S') ]

Candidates of ``S`` that share the same successor set ``Q`` only matter
through their largest state cost, so the operator is compiled once per
observer automaton into flat index arrays and evaluated with
``np.maximum.reduceat``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import model
from .errors import NonConvergenceError
from .model import CostModel, NullDefense, Reimage
from .observer import ObserverAutomaton, ObserverState

log = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SolveSettings:
    tolerance: float = 1e-9
    max_iterations: int = 100_000
    v0: float = 0.0
    dtype: type = np.longdouble

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class ValueFunction:
    """Values indexed like ``ObserverAutomaton.states``.

    ``residuals`` holds the sup-norm change of every sweep; the last entry is
    ``residual``.
    """

    values: np.ndarray
    beta: float
    iterations: int = 0
    residuals: list = field(default_factory=list, repr=False)

    @property
    def residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("inf")

    @property
    def error_bound(self) -> float:
        """Posterior bound on the sup-norm distance to the fixed point."""
        return self.residual * self.beta / (1.0 - self.beta)

    def __getitem__(self, s):
        return float(self.values[s])

    def __len__(self):
        return len(self.values)


class _Structure:
    """Cost-independent layout of the backup for one observer automaton."""

    def __init__(self, obs_aut: ObserverAutomaton):
        actions = obs_aut.actions
        succ, group_start, member_start, row_start = [], [], [], []
        members = {"before_action": [], "after_action": []}
        for s in range(obs_aut.n_states):
            for d in actions:
                row_start.append(len(group_start))
                groups = {}
                for Z, q in obs_aut.q_sets(s, d):
                    groups.setdefault(tuple(sorted(q)), []).append(Z)
                for q in sorted(groups):
                    group_start.append(len(succ))
                    succ.extend(q)
                    member_start.append(len(members["before_action"]))
                    for Z in groups[q]:
                        members["before_action"].append(model.levels_index(Z))
                        members["after_action"].append(model.levels_index(model.defender_effect(Z, d)))
        self.n_states = obs_aut.n_states
        self.n_actions = len(actions)
        self.succ = np.asarray(succ, dtype=np.intp)
        self.group_start = np.asarray(group_start, dtype=np.intp)
        self.members = {k: np.asarray(v, dtype=np.intp) for k, v in members.items()}
        self.member_start = np.asarray(member_start, dtype=np.intp)
        self.row_start = np.asarray(row_start, dtype=np.intp)


def _structure(obs_aut: ObserverAutomaton) -> _Structure:
    st = getattr(obs_aut, "_backup_structure", None)
    if st is None:
        st = _Structure(obs_aut)
        obs_aut._backup_structure = st
    return st


class BellmanOperator:
    """The backup for a fixed observer automaton and cost model.

    Arithmetic runs in ``dtype``; the default extended precision keeps
    rounding noise well below the 1e-9 residuals value iteration stops at.
    """

    def __init__(self, obs_aut: ObserverAutomaton, cm: CostModel, dtype=np.longdouble):
        cm.check_size(obs_aut.K)
        self.obs_aut = obs_aut
        self.cm = cm
        self.dtype = dtype
        self.beta = dtype(cm.beta)
        self.actions = obs_aut.actions
        st = self._st = _structure(obs_aut)
        z_cost = np.array([model.state_cost(Z, cm) for Z in model.all_levels(obs_aut.K)], dtype=dtype)
        members = st.members[cm.state_cost_timing]
        self.group_cost = np.maximum.reduceat(z_cost[members], st.member_start)
        self.action_costs = np.array([model.action_cost(d, cm) for d in self.actions], dtype=dtype)

    def q_values(self, V) -> np.ndarray:
        """Array ``[n_states, n_actions]`` of the bracketed min-max objective."""
        st = self._st
        V = np.asarray(V, dtype=self.dtype)
        best_next = np.maximum.reduceat(V[st.succ], st.group_start)
        group = self.group_cost + self.beta * best_next
        rows = np.maximum.reduceat(group, st.row_start)
        return rows.reshape(st.n_states, st.n_actions) + self.action_costs

    def __call__(self, V) -> np.ndarray:
        return self.q_values(V).min(axis=1)

    def minimizers(self, V, tie_tol: float = TIE_TOLERANCE) -> list:
        q = self.q_values(V)
        best = q.min(axis=1, keepdims=True)
        mask = q <= best + tie_tol
        return [tuple(self.actions[j] for j in np.flatnonzero(row)) for row in mask]


def _values(V) -> np.ndarray:
    return V.values if isinstance(V, ValueFunction) else np.asarray(V)


def bellman_backup(V, obs_aut: ObserverAutomaton, cm: CostModel, tie_tol: float = TIE_TOLERANCE):
    """One application of the operator: ``(TV as ValueFunction, minimizer sets)``."""
    V = _values(V)
    T = BellmanOperator(obs_aut, cm, V.dtype.type if V.dtype.kind == "f" else np.longdouble)
    q = T.q_values(V)
    best = q.min(axis=1)
    mask = q <= best[:, None] + tie_tol
    argmins = [tuple(T.actions[j] for j in np.flatnonzero(row)) for row in mask]
    return ValueFunction(best, cm.beta), argmins


def value_iteration(obs_aut: ObserverAutomaton, cm: CostModel,
                    settings: SolveSettings = SolveSettings()) -> ValueFunction:
    """Iterate the backup from a constant start until the sup-norm change is within tolerance."""
    T = BellmanOperator(obs_aut, cm, settings.dtype)
    V = np.full(obs_aut.n_states, settings.v0, dtype=settings.dtype)
    residuals = []
    for it in range(1, settings.max_iterations + 1):
        V_new = T(V)
        res = float(np.max(np.abs(V_new - V)))
        residuals.append(res)
        V = V_new
        if res <= settings.tolerance:
            log.debug("value iteration converged after %d sweeps, residual %.3g", it, res)
            return ValueFunction(V, cm.beta, it, residuals)
    raise NonConvergenceError(
        f"no convergence after {settings.max_iterations} sweeps (residual {residuals[-1]:.3g})",
        residual=residuals[-1], iterations=settings.max_iterations)


def confidentiality_threat(S: ObserverState, i: int, cm: CostModel) -> float:
    """Sum over candidates of the cost of computer ``i``'s level."""
    if not 1 <= i <= S.K:
        raise ValueError(f"computer {i} outside 1..{S.K}")
    costs = cm.level_costs
    return float(sum(costs[Z[i - 1]] for Z in S.candidates))


def choose_action(optimal: tuple, S: ObserverState, cm: CostModel):
    """Pick one action out of a set of equally good ones.

    Targeted actions beat the null action only when one of them aims at a
    computer with positive threat.  Among targeted actions the higher threat
    wins, then the lower computer index, then sense before re-image.
    """
    targeted = [d for d in optimal if not isinstance(d, NullDefense)]
    has_null = any(isinstance(d, NullDefense) for d in optimal)
    if not targeted:
        return NullDefense()
    threat = {i: confidentiality_threat(S, i, cm) for i in {d.computer for d in targeted}}
    if has_null and not any(threat[d.computer] > 0 for d in targeted):
        return NullDefense()
    return min(targeted, key=lambda d: (-threat[d.computer], d.computer, isinstance(d, Reimage)))


@dataclass
class Policy:
    """Chosen action and optimal-action set for each observer state."""

    obs_aut: ObserverAutomaton = field(repr=False)
    cm: CostModel
    actions: list = field(repr=False)
    optimal_sets: list = field(repr=False)
    value: ValueFunction = field(repr=False)

    @property
    def residual(self) -> float:
        return self.value.residual

    @property
    def iterations(self) -> int:
        return self.value.iterations

    def __call__(self, s: int):
        return self.actions[s]

    def action_for(self, S) -> object:
        return self.actions[self.obs_aut.index_of(S)]

    def __len__(self):
        return len(self.actions)


def extract_policy(V, obs_aut: ObserverAutomaton, cm: CostModel,
                   tie_tol: float = TIE_TOLERANCE) -> Policy:
    if not isinstance(V, ValueFunction):
        V = ValueFunction(np.asarray(V), cm.beta)
    T = BellmanOperator(obs_aut, cm, V.values.dtype.type if V.values.dtype.kind == "f" else np.longdouble)
    optimal = T.minimizers(V.values, tie_tol)
    chosen = [choose_action(opt, S, cm) for opt, S in zip(optimal, obs_aut.states)]
    return Policy(obs_aut, cm, chosen, optimal, V)


def solve(obs_aut: ObserverAutomaton, cm: CostModel, settings: SolveSettings = SolveSettings()) -> Policy:
    """Value iteration followed by policy extraction."""
    return extract_policy(value_iteration(obs_aut, cm, settings), obs_aut, cm)

