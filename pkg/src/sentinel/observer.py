"""The defender's observer: sets of system states consistent with what it saw.

An observer state is the set of decision-phase system states the network may
be in.  One step of the observer applies the defender's action to every
candidate (keeping only the branch matching a sense reading), then advances
by the observed attacker symbol: ``X`` folds in every unobservable attacker
event, ``H(i, j)`` applies that network attack where it is admissible.

:func:`build_observer_automaton` explores every observer state reachable from
a seed and records the transition function and, per ``(S, d, Z)``, the set of
successor observer states that can occur when ``Z`` is the true state.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from . import model
from .automaton import DEFAULT_STATE_BUDGET, event_marks, format_dot, format_fsm, _write
from .errors import CapacityError, InconsistentObservationError, ModelError
from .model import (
    DEFAULT_FLAGS,
    ExpandedSense,
    ModelFlags,
    NetworkAttack,
    Observation,
    Phase,
    Sense,
    SecurityLevel,
    SystemState,
    Unobserved,
    X,
)


def _as_levels(Z) -> tuple:
    if isinstance(Z, SystemState):
        return tuple(int(z) for z in Z.levels)
    if isinstance(Z, str):
        return model.parse_levels(Z)
    return tuple(int(z) for z in Z)


@dataclass(frozen=True)
class ObserverState:
    """Nonempty set of candidate level tuples, kept sorted by canonical index."""

    candidates: tuple

    def __post_init__(self):
        cands = tuple(sorted({_as_levels(Z) for Z in self.candidates}))
        if not cands:
            raise ValueError("an observer state needs at least one candidate")
        if len({len(Z) for Z in cands}) != 1:
            raise ValueError("candidates disagree on the number of computers")
        object.__setattr__(self, "candidates", cands)

    @classmethod
    def _trusted(cls, cands: tuple) -> "ObserverState":
        # cands already canonical: skips re-sorting in hot loops
        obj = object.__new__(cls)
        object.__setattr__(obj, "candidates", cands)
        return obj

    @classmethod
    def parse(cls, text: str) -> "ObserverState":
        """``ObserverState.parse("FNN|FNR")``; also accepts commas or spaces."""
        parts = text.replace(",", "|").replace(" ", "|").strip("{}").split("|")
        return cls(tuple(p for p in parts if p))

    @property
    def K(self) -> int:
        return len(self.candidates[0])

    @property
    def name(self) -> str:
        return "|".join(model.levels_name(Z) for Z in self.candidates)

    def states(self) -> list:
        return [SystemState(Z) for Z in self.candidates]

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __contains__(self, Z):
        return _as_levels(Z) in set(self.candidates)

    def __str__(self):
        return "{" + ",".join(model.levels_name(Z) for Z in self.candidates) + "}"


def initial_observer(K: int, candidates: Iterable | None = None, full: bool = False) -> ObserverState:
    """Default seed ``{(N, ..., N)}``; ``full=True`` gives every state."""
    if K < 1:
        raise ValueError(f"need at least one computer, got K={K}")
    if full:
        return ObserverState._trusted(tuple(model.all_levels(K)))
    if candidates is None:
        return ObserverState._trusted(((0,) * K,))
    cands = list(candidates)
    if not cands:
        raise ValueError("initial observer state must have at least one candidate")
    S = ObserverState(tuple(cands))
    if S.K != K:
        raise ValueError(f"initial candidates have {S.K} computers, expected {K}")
    return S


# -- kernels on canonical candidate tuples ----------------------------------


def _partition(cands: tuple, i: int) -> list:
    """Split by the level of computer ``i`` (0-based): ``[(level, cands), ...]``."""
    buckets = {}
    for Z in cands:
        buckets.setdefault(Z[i], []).append(Z)
    return [(z, tuple(buckets[z])) for z in sorted(buckets)]


def _apply_defender(cands: tuple, d) -> tuple:
    if isinstance(d, model.Reimage):
        return tuple(sorted({model.defender_effect(Z, d) for Z in cands}))
    for Z in cands[:1]:
        model.defender_effect(Z, d)  # index check
    return cands


def _observation_successors(cands: tuple, h_on_w: bool) -> dict:
    """``{observed symbol: canonical successor tuple}`` from an intermediate set."""
    out = {}
    for Z in cands:
        for a, nxt in model.attacker_moves(Z, h_on_w):
            key = a if isinstance(a, NetworkAttack) else X
            out.setdefault(key, set()).add(nxt)
    return {k: tuple(sorted(v)) for k, v in out.items()}


def _x_successor(cands: tuple, h_on_w: bool) -> tuple:
    succ = set()
    for Z in cands:
        for a, nxt in model.attacker_moves(Z, h_on_w):
            if not isinstance(a, NetworkAttack):
                succ.add(nxt)
    return tuple(sorted(succ))


def _h_successor(cands: tuple, h: NetworkAttack, h_on_w: bool) -> tuple:
    succ = set()
    for Z in cands:
        for a, nxt in model.attacker_moves(Z, h_on_w):
            if a == h:
                succ.add(nxt)
    return tuple(sorted(succ))


def _obs_order(symbol):
    if isinstance(symbol, Unobserved):
        return (0, 0, 0)
    return (1, symbol.source, symbol.target)


# -- public single-step operations ------------------------------------------


def sense_partition(S: ObserverState, i: int) -> list:
    """Branches of ``S`` after sensing computer ``i``: ``[(reading, ObserverState), ...]``."""
    if not 1 <= i <= S.K:
        raise ModelError(f"computer {i} outside 1..{S.K}")
    return [(SecurityLevel(z), ObserverState._trusted(part)) for z, part in _partition(S.candidates, i - 1)]


def observer_step(S: ObserverState, d, obs: Observation, flags: ModelFlags = DEFAULT_FLAGS) -> ObserverState:
    """One application of the observer transition function."""
    cands = S.candidates
    if isinstance(d, Sense):
        if obs.reading is None:
            raise InconsistentObservationError(f"{d.name} needs a sense reading")
        if not 1 <= d.computer <= S.K:
            raise ModelError(f"computer {d.computer} outside 1..{S.K}")
        cands = tuple(Z for Z in cands if Z[d.computer - 1] == obs.reading)
        if not cands:
            raise InconsistentObservationError(
                f"no candidate of {S} has computer {d.computer} at {obs.reading.name}")
    elif obs.reading is not None:
        raise InconsistentObservationError(f"a sense reading came with non-sense action {d.name}")
    cands = _apply_defender(cands, d)
    if isinstance(obs.attack, Unobserved):
        return ObserverState._trusted(_x_successor(cands, flags.h_admissible_on_w))
    succ = _h_successor(cands, obs.attack, flags.h_admissible_on_w)
    if not succ:
        raise InconsistentObservationError(f"{obs.attack.name} is not admissible at any candidate")
    return ObserverState._trusted(succ)


def realizable_observations(Zt, flags: ModelFlags = DEFAULT_FLAGS) -> list:
    """Attacker symbols the defender may see from true intermediate state ``Zt``."""
    symbols = [X]
    for a, _ in model.attacker_moves(_as_levels(Zt), flags.h_admissible_on_w):
        if isinstance(a, NetworkAttack):
            symbols.append(a)
    return symbols


def compute_Q(S: ObserverState, d, Z, flags: ModelFlags = DEFAULT_FLAGS) -> frozenset:
    """Observer states that can follow ``S`` under ``d`` when the truth is ``Z``."""
    Z = _as_levels(Z)
    if Z not in set(S.candidates):
        raise ModelError(f"{model.levels_name(Z)} is not a candidate of {S}")
    reading = SecurityLevel(Z[d.computer - 1]) if isinstance(d, Sense) else None
    Zt = model.defender_effect(Z, d)
    return frozenset(
        observer_step(S, d, Observation(a, reading), flags)
        for a in realizable_observations(Zt, flags)
    )


# -- the full automaton -----------------------------------------------------


@dataclass
class ObserverAutomaton:
    """Reachable observer states and their transitions.

    ``states`` are decision-phase observer states, ``intermediate_states`` the
    sets reached right after a defender action.  ``defender_branches`` maps
    ``(state index, action)`` to ``((reading or None, intermediate index), ...)``
    and ``observation_edges`` maps ``(intermediate index, symbol)`` to a state
    index.  ``entry`` lists the decision states reached first from the seed.
    """

    K: int
    flags: ModelFlags
    seed: ObserverState
    start_phase: Phase
    states: list = field(repr=False)
    intermediate_states: list = field(repr=False)
    defender_branches: dict = field(repr=False)
    observation_edges: dict = field(repr=False)
    entry: tuple = ()

    def __post_init__(self):
        self._index = {S.candidates: k for k, S in enumerate(self.states)}
        self._observations = {}
        for (b, symbol), s in self.observation_edges.items():
            self._observations.setdefault(b, []).append((symbol, s))

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def actions(self) -> tuple:
        return model.defender_actions(self.K)

    def index_of(self, S) -> int:
        if not isinstance(S, ObserverState):
            S = ObserverState(tuple(S))
        try:
            return self._index[S.candidates]
        except KeyError:
            raise KeyError(f"{S} is not a reachable observer state") from None

    def __contains__(self, S) -> bool:
        if not isinstance(S, ObserverState):
            S = ObserverState(tuple(S))
        return S.candidates in self._index

    def observations_from(self, b: int) -> list:
        """``[(symbol, state index), ...]`` leaving intermediate state ``b``."""
        return self._observations.get(b, [])

    def step(self, s: int, d, obs: Observation) -> int:
        """The transition function on indices."""
        for reading, b in self.defender_branches[(s, d)]:
            if reading == obs.reading:
                break
        else:
            raise InconsistentObservationError(
                f"reading {obs.reading} impossible for {d.name} at state {s}")
        try:
            return self.observation_edges[(b, obs.attack)]
        except KeyError:
            raise InconsistentObservationError(
                f"{obs.attack.name} impossible after {d.name} at state {s}") from None

    def q_sets(self, s: int, d) -> list:
        """``[(Z, frozenset of successor indices), ...]`` for each candidate of state ``s``."""
        branch = dict(self.defender_branches[(s, d)])
        out = []
        h_on_w = self.flags.h_admissible_on_w
        for Z in self.states[s].candidates:
            b = branch[Z[d.computer - 1]] if isinstance(d, Sense) else branch[None]
            Zt = model.defender_effect(Z, d)
            succ = {self.observation_edges[(b, X)]}
            for a, _ in model.attacker_moves(Zt, h_on_w):
                if isinstance(a, NetworkAttack):
                    succ.add(self.observation_edges[(b, a)])
            out.append((Z, frozenset(succ)))
        return out

    def transition_tally(self) -> dict:
        """Transition counts under the two conventions in use.

        ``composite``: one per (state, defender event with its sense reading,
        observed attacker symbol), i.e. per entry of the transition function.
        ``bipartite``: edges of the two-layer graph, counting defender-branch
        edges and observation edges separately.
        """
        n_obs = {b: len(v) for b, v in self._observations.items()}
        composite = sum(n_obs.get(b, 0) for branches in self.defender_branches.values() for _, b in branches)
        defender = sum(len(branches) for branches in self.defender_branches.values())
        return {"composite": composite, "bipartite": defender + len(self.observation_edges)}

    @property
    def n_transitions(self) -> int:
        return self.transition_tally()["composite"]

    def states_containing(self, Z) -> list:
        Z = _as_levels(Z)
        return [k for k, S in enumerate(self.states) if Z in set(S.candidates)]


def build_observer_automaton(K: int, S0: ObserverState | None = None,
                             flags: ModelFlags = DEFAULT_FLAGS,
                             start_phase: Phase | str = Phase.INTERMEDIATE,
                             max_states: int = DEFAULT_STATE_BUDGET) -> ObserverAutomaton:
    """Breadth-first reachable closure of the observer from ``S0``.

    With ``start_phase="intermediate"`` (the default) the attacker moves
    first: ``S0`` is the network before the first attacker event, and the
    seed itself is not a decision state unless it is reached again.  With
    ``"decision"`` the defender acts first from ``S0``.

    Indices follow discovery order; the queue is expanded with actions and
    symbols in canonical order so identical inputs give identical indices.
    """
    if S0 is None:
        S0 = initial_observer(K)
    if S0.K != K:
        raise ValueError(f"seed has {S0.K} computers, expected K={K}")
    start_phase = Phase(start_phase)
    h_on_w = flags.h_admissible_on_w
    actions = model.defender_actions(K)

    dec_index, int_index = {}, {}
    dec_list, int_list = [], []
    branches, obs_edges = {}, {}
    queue = deque()

    def register(cands, phase):
        table, lst = (dec_index, dec_list) if phase is Phase.DECISION else (int_index, int_list)
        k = table.get(cands)
        if k is None:
            if len(dec_list) + len(int_list) >= max_states:
                raise CapacityError(f"observer exceeds the budget of {max_states} states")
            k = table[cands] = len(lst)
            lst.append(cands)
            queue.append((phase, k))
        return k

    register(S0.candidates, start_phase)
    entry = []
    while queue:
        phase, k = queue.popleft()
        if phase is Phase.DECISION:
            cands = dec_list[k]
            for d in actions:
                if isinstance(d, Sense):
                    parts = [(SecurityLevel(z), part) for z, part in _partition(cands, d.computer - 1)]
                else:
                    parts = [(None, _apply_defender(cands, d))]
                branches[(k, d)] = tuple((z, register(part, Phase.INTERMEDIATE)) for z, part in parts)
        else:
            succ = _observation_successors(int_list[k], h_on_w)
            for symbol in sorted(succ, key=_obs_order):
                s = register(succ[symbol], Phase.DECISION)
                obs_edges[(k, symbol)] = s
                if start_phase is Phase.INTERMEDIATE and k == 0 and s not in entry:
                    entry.append(s)
    if start_phase is Phase.DECISION:
        entry = [0]

    return ObserverAutomaton(
        K=K,
        flags=flags,
        seed=S0,
        start_phase=start_phase,
        states=[ObserverState._trusted(c) for c in dec_list],
        intermediate_states=[ObserverState._trusted(c) for c in int_list],
        defender_branches=branches,
        observation_edges=obs_edges,
        entry=tuple(entry),
    )


# -- export -----------------------------------------------------------------


def _defender_event(d, reading):
    return ExpandedSense(d.computer, reading) if reading is not None else d


def _observer_transitions(obs_aut: ObserverAutomaton):
    dname = [f"d.{S.name}" for S in obs_aut.states]
    iname = [f"i.{S.name}" for S in obs_aut.intermediate_states]
    for (s, d), parts in obs_aut.defender_branches.items():
        for reading, b in parts:
            e = _defender_event(d, reading)
            yield dname[s], e, iname[b]
    for (b, symbol), s in obs_aut.observation_edges.items():
        yield iname[b], symbol, dname[s]


def export_observer_fsm(obs_aut: ObserverAutomaton, destination=None) -> str:
    states = [(f"d.{S.name}", Phase.DECISION) for S in obs_aut.states]
    states += [(f"i.{S.name}", Phase.INTERMEDIATE) for S in obs_aut.intermediate_states]
    transitions = [(s, e.name, t, *event_marks(e)) for s, e, t in _observer_transitions(obs_aut)]
    tally = obs_aut.transition_tally()
    comments = [
        f"observer automaton K={obs_aut.K} seed={obs_aut.seed.name} start={obs_aut.start_phase.value} "
        f"h_admissible_on_w={'true' if obs_aut.flags.h_admissible_on_w else 'false'}",
        f"decision_states={obs_aut.n_states} composite_transitions={tally['composite']} "
        f"bipartite_transitions={tally['bipartite']}",
    ]
    text = format_fsm(states, transitions, comments)
    _write(text, destination)
    return text


def export_observer_dot(obs_aut: ObserverAutomaton, destination=None) -> str:
    nodes = [(f"d.{S.name}", f"S{k}", Phase.DECISION) for k, S in enumerate(obs_aut.states)]
    nodes += [(f"i.{S.name}", f"~S{k}", Phase.INTERMEDIATE) for k, S in enumerate(obs_aut.intermediate_states)]
    edges = [(s, t, e.name, event_marks(e)[1]) for s, e, t in _observer_transitions(obs_aut)]
    text = format_dot(nodes, edges, name=f"observer_K{obs_aut.K}")
    _write(text, destination)
    return text
