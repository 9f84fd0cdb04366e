"""Run configuration: a TOML file with one table per pipeline stage.

Every key is optional; the defaults reproduce the re-image sensitivity
setting (c = 0/1/2/8, null 0, sense 0.1, beta 0.9) with ``r = 10``.
Example::

    k = 2
    seed = 0
    max_states = 2000000   # budget for automaton constructions

    [costs]
    cost_reimage = 10.0

    [model]
    h_admissible_on_w = true

    [observer]
    seed = ["NN"]          # or "all"
    start_phase = "intermediate"

    [solver]
    tolerance = 1e-9

    [sweep]
    r_from = 3.0
    r_to = 30.0
    r_step = 0.2
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import tomli
import tomli_w

from .automaton import DEFAULT_STATE_BUDGET
from .errors import ConfigError
from .model import COST_TIMINGS, CostModel, ModelFlags, Phase, SecurityLevel
from .observer import initial_observer
from .solver import SolveSettings


@dataclass
class ObserverOptions:
    seed: object = None  # None -> all-normal; "all" -> every state; list of level strings
    start_phase: str = "intermediate"

    def seed_state(self, K: int):
        if self.seed == "all":
            return initial_observer(K, full=True)
        if self.seed is None:
            return initial_observer(K)
        return initial_observer(K, candidates=list(self.seed))


@dataclass
class SweepOptions:
    r_from: float = 3.0
    r_to: float = 30.0
    r_step: float = 0.2


@dataclass
class RunConfig:
    k: int = 2
    seed: int = 0
    workers: int = 1
    max_states: int = DEFAULT_STATE_BUDGET
    output_dir: str | None = None
    costs: CostModel = field(default_factory=CostModel)
    model: ModelFlags = field(default_factory=ModelFlags)
    observer: ObserverOptions = field(default_factory=ObserverOptions)
    solver: SolveSettings = field(default_factory=SolveSettings)
    sweep: SweepOptions = field(default_factory=SweepOptions)

    def to_dict(self) -> dict:
        solver = {"tolerance": self.solver.tolerance, "max_iterations": self.solver.max_iterations,
                  "v0": self.solver.v0}
        costs = {}
        for f in fields(CostModel):
            v = getattr(self.costs, f.name)
            costs[f.name] = list(v) if isinstance(v, tuple) else v
        observer = {"start_phase": self.observer.start_phase}
        if self.observer.seed is not None:
            observer["seed"] = self.observer.seed if self.observer.seed == "all" else list(self.observer.seed)
        doc = {"k": self.k, "seed": self.seed, "workers": self.workers, "max_states": self.max_states}
        if self.output_dir is not None:
            doc["output_dir"] = self.output_dir
        doc.update({
            "costs": costs,
            "model": asdict(self.model),
            "observer": observer,
            "solver": solver,
            "sweep": asdict(self.sweep),
        })
        return doc

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_TOP = {"k": int, "seed": int, "workers": int, "max_states": int, "output_dir": str}
_SECTIONS = {
    "costs": {f.name for f in fields(CostModel)},
    "model": {f.name for f in fields(ModelFlags)},
    "observer": {"seed", "start_phase"},
    "solver": {"tolerance", "max_iterations", "v0"},
    "sweep": {f.name for f in fields(SweepOptions)},
}


def _number(value, where, problems):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"{where}: expected a number, got {value!r}")
        return None
    return float(value)


def config_from_dict(doc: dict) -> RunConfig:
    """Validate a parsed document; raises ConfigError listing every problem."""
    problems = []
    cfg = RunConfig()
    for key in doc:
        if key not in _TOP and key not in _SECTIONS:
            problems.append(f"unknown key {key!r}")
    for key, typ in _TOP.items():
        if key in doc:
            v = doc[key]
            if typ is int and (isinstance(v, bool) or not isinstance(v, int)):
                problems.append(f"{key}: expected an integer, got {v!r}")
            elif typ is str and not isinstance(v, str):
                problems.append(f"{key}: expected a string, got {v!r}")
            else:
                setattr(cfg, key, v)
    if cfg.k < 1:
        problems.append(f"k: need at least one computer, got {cfg.k}")
    if cfg.workers < 1:
        problems.append(f"workers: must be at least 1, got {cfg.workers}")
    if cfg.max_states < 1:
        problems.append(f"max_states: must be positive, got {cfg.max_states}")

    sections = {}
    for name, allowed in _SECTIONS.items():
        sec = doc.get(name, {})
        if not isinstance(sec, dict):
            problems.append(f"[{name}] must be a table")
            sec = {}
        for key in sec:
            if key not in allowed:
                problems.append(f"[{name}] unknown key {key!r}")
        sections[name] = {k: v for k, v in sec.items() if k in allowed}

    costs = {}
    for key, v in sections["costs"].items():
        where = f"costs.{key}"
        if key == "state_cost_timing":
            if v not in COST_TIMINGS:
                problems.append(f"{where}: expected one of {', '.join(COST_TIMINGS)}, got {v!r}")
            costs[key] = v
        elif key in ("cost_sense", "cost_reimage") and isinstance(v, list):
            vals = [_number(x, where, problems) for x in v]
            if len(vals) != cfg.k:
                problems.append(f"{where}: lists {len(vals)} computers but k={cfg.k}")
            costs[key] = tuple(vals)
        else:
            costs[key] = _number(v, where, problems)
    if not problems:
        try:
            cfg.costs = CostModel(**costs)
        except ConfigError as exc:
            problems.extend(f"costs: {v}" for v in exc.violations)

    for key, v in sections["model"].items():
        if not isinstance(v, bool):
            problems.append(f"model.{key}: expected true or false, got {v!r}")
        else:
            cfg.model = ModelFlags(**{key: v})

    obs = sections["observer"]
    if "start_phase" in obs:
        if obs["start_phase"] not in (p.value for p in Phase):
            problems.append(f"observer.start_phase: expected decision or intermediate, got {obs['start_phase']!r}")
        else:
            cfg.observer.start_phase = obs["start_phase"]
    if "seed" in obs:
        seed = obs["seed"]
        if seed == "all":
            cfg.observer.seed = "all"
        elif not isinstance(seed, list) or not seed:
            problems.append("observer.seed: expected \"all\" or a nonempty list of states like \"NR\"")
        else:
            try:
                for s in seed:
                    if len(s) != cfg.k:
                        raise ValueError(f"{s!r} does not have {cfg.k} levels")
                    [SecurityLevel.parse(c) for c in s]
                cfg.observer.seed = list(seed)
            except (ValueError, TypeError) as exc:
                problems.append(f"observer.seed: {exc}")

    sol = sections["solver"]
    kwargs = {}
    if "tolerance" in sol:
        kwargs["tolerance"] = _number(sol["tolerance"], "solver.tolerance", problems)
    if "v0" in sol:
        kwargs["v0"] = _number(sol["v0"], "solver.v0", problems)
    if "max_iterations" in sol:
        v = sol["max_iterations"]
        if isinstance(v, bool) or not isinstance(v, int):
            problems.append(f"solver.max_iterations: expected an integer, got {v!r}")
        else:
            kwargs["max_iterations"] = v
    if None not in kwargs.values():
        try:
            cfg.solver = SolveSettings(**kwargs)
        except ValueError as exc:
            problems.append(f"solver: {exc}")

    sw = {k: _number(v, f"sweep.{k}", problems) for k, v in sections["sweep"].items()}
    if None not in sw.values():
        cfg.sweep = SweepOptions(**{**asdict(cfg.sweep), **sw})
        if not 0 < cfg.sweep.r_from <= cfg.sweep.r_to:
            problems.append(f"sweep: need 0 < r_from <= r_to, got {cfg.sweep.r_from}, {cfg.sweep.r_to}")
        if not cfg.sweep.r_step > 0:
            problems.append(f"sweep.r_step: must be positive, got {cfg.sweep.r_step}")

    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(doc)


def dump_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())
