"""The bipartite system automaton seen from the defender's side.

Decision states carry defender edges (null, re-image, and sense split by its
reading); intermediate states carry one edge per admissible attacker event.
The automaton can be written as a plain-text FSM listing, readable by
generic DES tools, or as Graphviz DOT.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

from . import model
from .errors import CapacityError
from .model import (
    BoundaryAttack,
    ExpandedSense,
    ModelFlags,
    NetworkAttack,
    NullAttack,
    NullDefense,
    Phase,
    Reimage,
    SystemState,
    DEFAULT_FLAGS,
)

DEFAULT_STATE_BUDGET = 2_000_000


def event_marks(event) -> tuple:
    """``(controllable, observable)`` for an automaton event."""
    if isinstance(event, (NullDefense, Reimage, ExpandedSense, model.Sense)):
        return True, True
    if isinstance(event, (NullAttack, BoundaryAttack)):
        return False, False
    if isinstance(event, (NetworkAttack, model.Unobserved)):
        # X itself is observable: the defender knows *an* attacker event happened.
        return False, True
    raise TypeError(f"not an automaton event: {event!r}")


def expanded_defender_events(K: int) -> tuple:
    return (
        (NullDefense(),)
        + tuple(Reimage(i) for i in range(1, K + 1))
        + tuple(ExpandedSense(i, z) for i in range(1, K + 1) for z in model.LEVELS)
    )


@dataclass
class SystemAutomaton:
    K: int
    flags: ModelFlags
    decision_states: tuple
    intermediate_states: tuple
    defender_edges: dict = field(repr=False)
    attacker_edges: dict = field(repr=False)

    @property
    def n_states(self) -> int:
        return len(self.decision_states) + len(self.intermediate_states)

    @property
    def events(self) -> list:
        seen = {}
        for _, e, _ in self.transitions():
            seen.setdefault(e.name, e)
        return list(seen.values())

    def transitions(self):
        """Yield ``(src, event, dst)`` in canonical order."""
        yield from ((s, e, t) for (s, e), t in self.defender_edges.items())
        yield from ((s, e, t) for (s, e), t in self.attacker_edges.items())


def build_system_automaton(K: int, flags: ModelFlags = DEFAULT_FLAGS,
                           max_states: int = DEFAULT_STATE_BUDGET) -> SystemAutomaton:
    if K < 1:
        raise ValueError(f"need at least one computer, got K={K}")
    if 2 * 4 ** K > max_states:
        raise CapacityError(f"K={K} needs {2 * 4 ** K} states, budget is {max_states}")

    decision = tuple(SystemState(z, Phase.DECISION) for z in model.all_levels(K))
    intermediate = tuple(SystemState(z, Phase.INTERMEDIATE) for z in model.all_levels(K))
    defender_edges = {}
    for Z in decision:
        for e in expanded_defender_events(K):
            if isinstance(e, ExpandedSense):
                if Z[e.computer] != e.reading:
                    continue
                d = e.action
            else:
                d = e
            defender_edges[(Z, e)] = model.apply_defender(Z, d)
    attacker_edges = {}
    for Zt in intermediate:
        for a, nxt in model.attacker_moves(tuple(int(z) for z in Zt.levels), flags.h_admissible_on_w):
            attacker_edges[(Zt, a)] = SystemState(nxt, Phase.DECISION)
    return SystemAutomaton(K, flags, decision, intermediate, defender_edges, attacker_edges)


# -- text formats -----------------------------------------------------------


def format_fsm(states, transitions, comments=()) -> str:
    """Render the FSM listing.

    ``states`` is a sequence of ``(name, phase)``; ``transitions`` a sequence
    of ``(src_name, event_name, dst_name, controllable, observable)``.
    """
    transitions = list(transitions)
    events = {t[1] for t in transitions}
    out = io.StringIO()
    for c in comments:
        out.write(f"# {c}\n")
    out.write(f"states {len(states)} events {len(events)}\n")
    for name, phase in states:
        out.write(f"state {name} {Phase(phase).value}\n")
    for src, ev, dst, c, o in transitions:
        out.write(f"trans {src} {ev} {dst} {'c' if c else 'uc'} {'o' if o else 'uo'}\n")
    return out.getvalue()


def read_fsm(text: str) -> dict:
    """Parse an FSM listing into its raw parts (no model interpretation)."""
    comments, states, transitions = [], [], []
    header = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            comments.append(line[1:].strip())
            continue
        parts = line.split()
        if parts[0] == "states" and len(parts) == 4:
            header = (int(parts[1]), int(parts[3]))
        elif parts[0] == "state" and len(parts) == 3:
            states.append((parts[1], Phase(parts[2])))
        elif parts[0] == "trans" and len(parts) == 6:
            transitions.append((parts[1], parts[2], parts[3], parts[4] == "c", parts[5] == "o"))
        else:
            raise ValueError(f"line {lineno}: cannot parse {line!r}")
    if header is None:
        raise ValueError("missing 'states <n> events <m>' header")
    if header[0] != len(states):
        raise ValueError(f"header announces {header[0]} states, found {len(states)}")
    n_events = len({t[1] for t in transitions})
    if header[1] != n_events:
        raise ValueError(f"header announces {header[1]} events, found {n_events}")
    return {"comments": comments, "states": states, "transitions": transitions}


def _write(text: str, destination):
    if destination is None:
        return
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(os.fspath(destination), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _state_name(Z: SystemState) -> str:
    return f"{Z.phase.tag}.{Z.name}"


def export_fsm(aut: SystemAutomaton, destination=None) -> str:
    """Write the automaton as an FSM listing; also returns the text."""
    states = [(_state_name(Z), Z.phase) for Z in aut.decision_states + aut.intermediate_states]
    transitions = [
        (_state_name(s), e.name, _state_name(t), *event_marks(e))
        for s, e, t in aut.transitions()
    ]
    flag = "true" if aut.flags.h_admissible_on_w else "false"
    text = format_fsm(states, transitions, comments=[f"system automaton K={aut.K} h_admissible_on_w={flag}"])
    _write(text, destination)
    return text


def parse_fsm(text: str) -> SystemAutomaton:
    """Rebuild a :class:`SystemAutomaton` from :func:`export_fsm` output."""
    raw = read_fsm(text)
    flags = DEFAULT_FLAGS
    for c in raw["comments"]:
        if "h_admissible_on_w=" in c:
            flags = ModelFlags(c.split("h_admissible_on_w=")[1].split()[0] == "true")

    def state(name):
        tag, levels = name.split(".", 1)
        return SystemState(tuple(levels), Phase.DECISION if tag == "d" else Phase.INTERMEDIATE)

    states = [state(name) for name, _ in raw["states"]]
    decision = tuple(s for s in states if s.phase is Phase.DECISION)
    intermediate = tuple(s for s in states if s.phase is Phase.INTERMEDIATE)
    defender_edges, attacker_edges = {}, {}
    for src, ev, dst, _, _ in raw["transitions"]:
        s, t = state(src), state(dst)
        edges = defender_edges if s.phase is Phase.DECISION else attacker_edges
        edges[(s, model.parse_event(ev))] = t
    K = decision[0].K if decision else 0
    return SystemAutomaton(K, flags, decision, intermediate, defender_edges, attacker_edges)


def _dot_quote(s: str) -> str:
    return '"{}"'.format(s.replace('"', r"\""))


def format_dot(nodes, edges, name="automaton") -> str:
    """``nodes``: ``(id, label, phase)``; ``edges``: ``(src, dst, label, observable)``."""
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for node_id, label, phase in nodes:
        shape = "box" if Phase(phase) is Phase.DECISION else "ellipse"
        lines.append(f"  {_dot_quote(node_id)} [shape={shape}, label={_dot_quote(label)}];")
    for src, dst, label, observable in edges:
        style = "" if observable else ", style=dashed"
        lines.append(f"  {_dot_quote(src)} -> {_dot_quote(dst)} [label={_dot_quote(label)}{style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_dot(aut: SystemAutomaton, destination=None) -> str:
    nodes = [(_state_name(Z), Z.name, Z.phase) for Z in aut.decision_states + aut.intermediate_states]
    edges = [
        (_state_name(s), _state_name(t), e.name, event_marks(e)[1])
        for s, e, t in aut.transitions()
    ]
    text = format_dot(nodes, edges, name=f"system_K{aut.K}")
    _write(text, destination)
    return text
