"""Security levels, network states, events and costs.

A network of ``K`` computers is described by a tuple of per-computer
security levels.  Computers are numbered from 1 in every public API; the
level tuples themselves are ordinary 0-based Python tuples.

Two kinds of state alternate in time.  In a *decision* state the defender
picks an action; the result is an *intermediate* state in which the attacker
plays exactly one event, producing the next decision state.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace
from functools import lru_cache
from typing import Sequence, Union

from .errors import ConfigError, ModelError


class SecurityLevel(enum.IntEnum):
    """Per-computer security level, totally ordered ``N < R < W < F``."""

    N = 0  # normal
    R = 1  # compromised, user access
    W = 2  # fully compromised, root access
    F = 3  # remote compromised, can attack other computers

    @classmethod
    def parse(cls, value) -> "SecurityLevel":
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"unknown security level {value!r}") from None
        return cls(value)


LEVELS = tuple(SecurityLevel)
N, R, W, F = LEVELS


class Phase(str, enum.Enum):
    DECISION = "decision"
    INTERMEDIATE = "intermediate"

    @property
    def tag(self) -> str:
        return "d" if self is Phase.DECISION else "i"

    def flipped(self) -> "Phase":
        return Phase.INTERMEDIATE if self is Phase.DECISION else Phase.DECISION


Levels = tuple  # tuple[int, ...] of SecurityLevel values


def levels_name(levels: Sequence[int]) -> str:
    return "".join(LEVELS[z].name for z in levels)


def parse_levels(text: str) -> Levels:
    return tuple(int(SecurityLevel.parse(c)) for c in text)


def levels_index(levels: Sequence[int]) -> int:
    """Base-4 index with computer 1 as the most significant digit."""
    idx = 0
    for z in levels:
        idx = idx * 4 + int(z)
    return idx


def index_levels(index: int, K: int) -> Levels:
    if not 0 <= index < 4 ** K:
        raise ValueError(f"state index {index} out of range for K={K}")
    digits = []
    for _ in range(K):
        index, z = divmod(index, 4)
        digits.append(z)
    return tuple(reversed(digits))


@dataclass(frozen=True, order=True)
class SystemState:
    """A K-tuple of security levels tagged with the phase it belongs to."""

    levels: Levels
    phase: Phase = Phase.DECISION

    def __post_init__(self):
        levels = tuple(SecurityLevel.parse(z) for z in self.levels)
        if not levels:
            raise ValueError("a system state needs at least one computer")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "phase", Phase(self.phase))

    @classmethod
    def parse(cls, text: str, phase: Phase = Phase.DECISION) -> "SystemState":
        """``SystemState.parse("FNR")`` -> (F, N, R)."""
        return cls(tuple(text), phase)

    @classmethod
    def from_index(cls, index: int, K: int, phase: Phase = Phase.DECISION) -> "SystemState":
        return cls(index_levels(index, K), phase)

    @property
    def K(self) -> int:
        return len(self.levels)

    @property
    def index(self) -> int:
        return levels_index(self.levels)

    @property
    def name(self) -> str:
        return levels_name(self.levels)

    def __getitem__(self, computer: int) -> SecurityLevel:
        """Level of computer ``computer`` (1-based)."""
        return self.levels[computer - 1]

    def __str__(self):
        return f"{self.phase.tag}.{self.name}"


def all_levels(K: int) -> list:
    """Every level tuple for ``K`` computers in canonical index order."""
    return [index_levels(i, K) for i in range(4 ** K)]


# -- events -----------------------------------------------------------------


@dataclass(frozen=True)
class NullAttack:
    @property
    def name(self) -> str:
        return "Na"


@dataclass(frozen=True)
class BoundaryAttack:
    """Crossing of boundary ``boundary`` (1..3) on computer ``computer``."""

    computer: int
    boundary: int

    def __post_init__(self):
        if self.computer < 1:
            raise ValueError("computer indices start at 1")
        if self.boundary not in (1, 2, 3):
            raise ValueError(f"boundary must be 1, 2 or 3, got {self.boundary}")

    @property
    def name(self) -> str:
        return f"P{self.computer}.{self.boundary}"


@dataclass(frozen=True)
class NetworkAttack:
    """Computer ``source`` (at level F) pushes computer ``target`` to W."""

    source: int
    target: int

    def __post_init__(self):
        if self.source < 1 or self.target < 1:
            raise ValueError("computer indices start at 1")
        if self.source == self.target:
            raise ValueError("a computer cannot network-attack itself")

    @property
    def name(self) -> str:
        return f"H{self.source}.{self.target}"


AttackerEvent = Union[NullAttack, BoundaryAttack, NetworkAttack]


@dataclass(frozen=True)
class NullDefense:
    computer = None

    @property
    def name(self) -> str:
        return "Nd"


@dataclass(frozen=True)
class Sense:
    computer: int

    def __post_init__(self):
        if self.computer < 1:
            raise ValueError("computer indices start at 1")

    @property
    def name(self) -> str:
        return f"E{self.computer}"


@dataclass(frozen=True)
class Reimage:
    computer: int

    def __post_init__(self):
        if self.computer < 1:
            raise ValueError("computer indices start at 1")

    @property
    def name(self) -> str:
        return f"R{self.computer}"


DefenderAction = Union[NullDefense, Sense, Reimage]


@dataclass(frozen=True)
class ExpandedSense:
    """Sense of ``computer`` that returned ``reading``.

    Only used inside automata, where splitting a sense by its outcome keeps
    every edge deterministic.  The defender itself only ever chooses
    :class:`Sense`.
    """

    computer: int
    reading: SecurityLevel

    def __post_init__(self):
        if self.computer < 1:
            raise ValueError("computer indices start at 1")
        object.__setattr__(self, "reading", SecurityLevel.parse(self.reading))

    @property
    def action(self) -> Sense:
        return Sense(self.computer)

    @property
    def name(self) -> str:
        return f"E{self.computer}^{self.reading.name}"


@dataclass(frozen=True)
class Unobserved:
    """The grouped stand-in for every attacker event the defender cannot see."""

    @property
    def name(self) -> str:
        return "X"


X = Unobserved()
ObservedAttack = Union[Unobserved, NetworkAttack]


@dataclass(frozen=True)
class Observation:
    """What the defender learns in one step.

    ``reading`` is the revealed level of the sensed computer and must be
    present exactly when the step's defender action was a :class:`Sense`.
    """

    attack: ObservedAttack = X
    reading: SecurityLevel | None = None

    def __post_init__(self):
        if not isinstance(self.attack, (Unobserved, NetworkAttack)):
            raise TypeError(f"observed attacker symbol must be X or H(i,j), got {self.attack!r}")
        if self.reading is not None:
            object.__setattr__(self, "reading", SecurityLevel.parse(self.reading))


def parse_event(name: str):
    """Inverse of the ``name`` property of every event type (and of ``X``)."""
    try:
        if name == "Na":
            return NullAttack()
        if name == "Nd":
            return NullDefense()
        if name == "X":
            return X
        head, body = name[0], name[1:]
        if head == "P":
            i, n = body.split(".")
            return BoundaryAttack(int(i), int(n))
        if head == "H":
            i, j = body.split(".")
            return NetworkAttack(int(i), int(j))
        if head == "R":
            return Reimage(int(body))
        if head == "E":
            if "^" in body:
                i, z = body.split("^")
                return ExpandedSense(int(i), SecurityLevel.parse(z))
            return Sense(int(body))
    except ValueError:
        pass
    raise ValueError(f"unrecognised event name {name!r}")


def defender_actions(K: int) -> tuple:
    """All defender actions in canonical order: null, senses, re-images."""
    return (
        (NullDefense(),)
        + tuple(Sense(i) for i in range(1, K + 1))
        + tuple(Reimage(i) for i in range(1, K + 1))
    )


def action_kind(d: DefenderAction) -> str:
    if isinstance(d, Reimage):
        return "reimage"
    if isinstance(d, Sense):
        return "sense"
    return "null"


def observe(a: AttackerEvent) -> ObservedAttack:
    """Map an attacker event to what the defender sees of it."""
    if isinstance(a, NetworkAttack):
        return a
    return X


# -- flags and costs --------------------------------------------------------


@dataclass(frozen=True)
class ModelFlags:
    """Switches for the points where the attack rules admit two readings.

    ``h_admissible_on_w``: whether a network attack may target a computer
    that is already at level W (a no-op on the target when it is).
    """

    h_admissible_on_w: bool = True


DEFAULT_FLAGS = ModelFlags()
COST_TIMINGS = ("before_action", "after_action")


def _as_costs(value):
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    return float(value)


@dataclass(frozen=True)
class CostModel:
    """State costs, action costs and the discount factor.

    ``cost_sense`` and ``cost_reimage`` are either one number applied to every
    computer or a per-computer sequence.  The defaults are the parameters of
    the re-image sensitivity study, with ``r = cost_reimage = 10``.

    ``state_cost_timing`` selects which state a step is charged for:
    ``"before_action"`` charges the decision state the defender acts in,
    ``"after_action"`` charges the state left after the defender's action.
    """

    c_N: float = 0.0
    c_R: float = 1.0
    c_W: float = 2.0
    c_F: float = 8.0
    cost_null: float = 0.0
    cost_sense: float | tuple = 0.1
    cost_reimage: float | tuple = 10.0
    beta: float = 0.9
    state_cost_timing: str = "before_action"

    def __post_init__(self):
        for f in fields(self):
            if f.name != "state_cost_timing":
                object.__setattr__(self, f.name, _as_costs(getattr(self, f.name)))
        problems = self.violations()
        if problems:
            raise ConfigError(problems)

    def violations(self) -> list:
        out = []
        state = [self.c_N, self.c_R, self.c_W, self.c_F]
        if not self.c_N >= 0:
            out.append(f"c_N must be >= 0, got {self.c_N}")
        for (a, va), (b, vb) in zip(
            zip("NRW", state[:-1]), zip("RWF", state[1:])
        ):
            if not va < vb:
                out.append(f"state costs must satisfy c_{a} < c_{b}, got {va} >= {vb}")
        if state[-1] == float("inf"):
            out.append("c_F must be finite")
        if not self.cost_null >= 0:
            out.append(f"cost_null must be >= 0, got {self.cost_null}")
        sense, reimage = self.cost_sense, self.cost_reimage
        if isinstance(sense, tuple) and isinstance(reimage, tuple) and len(sense) != len(reimage):
            out.append("per-computer cost_sense and cost_reimage differ in length")
        else:
            n = max(len(c) if isinstance(c, tuple) else 1 for c in (sense, reimage))
            for i in range(n):
                s = sense[i] if isinstance(sense, tuple) else sense
                r = reimage[i] if isinstance(reimage, tuple) else reimage
                where = f" for computer {i + 1}" if n > 1 else ""
                if not self.cost_null < s:
                    out.append(f"action costs must satisfy cost_null < cost_sense{where}, got {self.cost_null} >= {s}")
                if not s < r:
                    out.append(f"action costs must satisfy cost_sense < cost_reimage{where}, got {s} >= {r}")
                if r == float("inf"):
                    out.append(f"cost_reimage{where} must be finite")
        if not 0.0 < self.beta < 1.0:
            out.append(f"beta must lie in (0, 1), got {self.beta}")
        if self.state_cost_timing not in COST_TIMINGS:
            out.append(f"state_cost_timing must be one of {', '.join(COST_TIMINGS)}, got {self.state_cost_timing!r}")
        return out

    def check_size(self, K: int) -> None:
        for name in ("cost_sense", "cost_reimage"):
            value = getattr(self, name)
            if isinstance(value, tuple) and len(value) != K:
                raise ConfigError(f"{name} lists {len(value)} computers but K={K}")

    @property
    def level_costs(self) -> tuple:
        return (self.c_N, self.c_R, self.c_W, self.c_F)

    def sense_cost(self, computer: int) -> float:
        c = self.cost_sense
        return c[computer - 1] if isinstance(c, tuple) else c

    def reimage_cost(self, computer: int) -> float:
        c = self.cost_reimage
        return c[computer - 1] if isinstance(c, tuple) else c

    def with_reimage_cost(self, r) -> "CostModel":
        return replace(self, cost_reimage=r)

    def max_action_cost(self, K: int) -> float:
        return max(self.reimage_cost(i) for i in range(1, K + 1))

    def value_bound(self, K: int) -> float:
        """Upper bound on any discounted cost: (max state cost + max action cost) / (1 - beta)."""
        return (K * self.c_F + self.max_action_cost(K)) / (1.0 - self.beta)


# -- costs ------------------------------------------------------------------


def level_cost(z, cm: CostModel) -> float:
    return cm.level_costs[int(z)]


def state_cost(Z, cm: CostModel) -> float:
    """Sum of per-computer level costs; accepts a SystemState or a level tuple."""
    levels = Z.levels if isinstance(Z, SystemState) else Z
    costs = cm.level_costs
    return float(sum(costs[int(z)] for z in levels))


def action_cost(d: DefenderAction, cm: CostModel) -> float:
    if isinstance(d, Sense):
        return cm.sense_cost(d.computer)
    if isinstance(d, Reimage):
        return cm.reimage_cost(d.computer)
    if isinstance(d, NullDefense):
        return cm.cost_null
    raise TypeError(f"not a defender action: {d!r}")


# -- dynamics on raw level tuples -------------------------------------------
#
# The observer construction calls these millions of times, so they work on
# plain int tuples and are memoised.  The SystemState wrappers below add the
# phase bookkeeping and the admissibility checks.


@lru_cache(maxsize=None)
def attacker_moves(levels: Levels, h_on_w: bool = True) -> tuple:
    """Admissible ``(event, next_levels)`` pairs from an intermediate state.

    Events come in canonical order: null, boundary attacks by computer,
    network attacks by (source, target).
    """
    levels = tuple(int(z) for z in levels)
    K = len(levels)
    moves = [(NullAttack(), levels)]
    for i, z in enumerate(levels):
        if z < F:
            nxt = levels[:i] + (z + 1,) + levels[i + 1:]
            moves.append((BoundaryAttack(i + 1, z + 1), nxt))
    top = W if h_on_w else R
    for i, zi in enumerate(levels):
        if zi != F:
            continue
        for j in range(K):
            if j != i and levels[j] <= top:
                nxt = levels[:j] + (int(W),) + levels[j + 1:]
                moves.append((NetworkAttack(i + 1, j + 1), nxt))
    return tuple(moves)


def defender_effect(levels: Levels, d: DefenderAction) -> Levels:
    if isinstance(d, Reimage):
        i = d.computer - 1
        if not 0 <= i < len(levels):
            raise ModelError(f"{d.name} targets a computer outside 1..{len(levels)}")
        return levels[:i] + (0,) + levels[i + 1:]
    if isinstance(d, Sense):
        if not 1 <= d.computer <= len(levels):
            raise ModelError(f"{d.name} targets a computer outside 1..{len(levels)}")
        return levels
    if isinstance(d, NullDefense):
        return levels
    raise TypeError(f"not a defender action: {d!r}")


# -- public transition functions --------------------------------------------


def _require_phase(Z: SystemState, phase: Phase, what: str):
    if Z.phase is not phase:
        raise ModelError(f"{what} requires a {phase.value} state, got {Z}")


def admissible_attacker(Zt: SystemState, flags: ModelFlags = DEFAULT_FLAGS) -> tuple:
    """Attacker events admissible at intermediate state ``Zt``, canonically ordered."""
    _require_phase(Zt, Phase.INTERMEDIATE, "admissible_attacker")
    return tuple(a for a, _ in attacker_moves(tuple(int(z) for z in Zt.levels), flags.h_admissible_on_w))


def apply_attacker(Zt: SystemState, a: AttackerEvent, flags: ModelFlags = DEFAULT_FLAGS) -> SystemState:
    _require_phase(Zt, Phase.INTERMEDIATE, "apply_attacker")
    for event, nxt in attacker_moves(tuple(int(z) for z in Zt.levels), flags.h_admissible_on_w):
        if event == a:
            return SystemState(nxt, Phase.DECISION)
    raise ModelError(f"attacker event {getattr(a, 'name', a)} is not admissible at {Zt}")


def apply_defender(Z: SystemState, d: DefenderAction) -> SystemState:
    _require_phase(Z, Phase.DECISION, "apply_defender")
    return SystemState(defender_effect(tuple(int(z) for z in Z.levels), d), Phase.INTERMEDIATE)
