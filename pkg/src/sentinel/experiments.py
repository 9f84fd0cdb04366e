"""Re-image cost sweeps: per-state optimal actions, switch points, action shares."""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .model import CostModel, action_kind
from .observer import ObserverAutomaton
from .solver import SolveSettings, solve

KINDS = ("reimage", "sense", "null")
_RANK = {"null": 0, "sense": 1, "reimage": 2}


def reimage_grid(r_from: float, r_to: float, r_step: float) -> list:
    """Evenly spaced grid including both endpoints, rounded to kill float drift."""
    if not 0 < r_from <= r_to:
        raise ConfigError(f"need 0 < r_from <= r_to, got {r_from}, {r_to}")
    if not r_step > 0:
        raise ConfigError(f"r_step must be positive, got {r_step}")
    n = int(np.floor((r_to - r_from) / r_step + 1e-9))
    grid = [round(r_from + k * r_step, 10) for k in range(n + 1)]
    if grid[-1] < r_to - 1e-9:
        grid.append(round(r_to, 10))
    return grid


@dataclass
class SweepResult:
    r_values: list
    actions: list = field(repr=False)  # actions[state][r index]
    residuals: list = field(default_factory=list, repr=False)
    iterations: list = field(default_factory=list, repr=False)

    @property
    def n_states(self) -> int:
        return len(self.actions)

    def kinds(self) -> np.ndarray:
        return np.array([[action_kind(d) for d in row] for row in self.actions], dtype=object)

    @property
    def shares(self) -> dict:
        return action_share(self)

    @property
    def switch_points(self) -> list:
        return detect_thresholds(self).switches


def _solve_point(args):
    obs_aut, cm, settings = args
    policy = solve(obs_aut, cm, settings)
    return policy.actions, policy.residual, policy.iterations


def sweep_reimage(obs_aut: ObserverAutomaton, cm_base: CostModel, r_from: float, r_to: float,
                  r_step: float = 0.2, settings: SolveSettings = SolveSettings(),
                  workers: int = 1) -> SweepResult:
    """Solve the problem at every re-image cost on the grid.

    Every grid point starts value iteration from the same initial value, so
    the action at a given ``r`` does not depend on the grid it sits in or on
    ``workers``.
    """
    grid = reimage_grid(r_from, r_to, r_step)
    K = obs_aut.K
    low = max(cm_base.sense_cost(i) for i in range(1, K + 1))
    bad = [r for r in grid if not r > low]
    if bad:
        raise ConfigError(f"re-image cost must exceed the sense cost {low}; grid has {bad[:3]}")
    jobs = [(obs_aut, cm_base.with_reimage_cost(r), settings) for r in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_point, jobs))
    else:
        results = [_solve_point(j) for j in jobs]
    per_state = [list(col) for col in zip(*(acts for acts, _, _ in results))]
    return SweepResult(
        r_values=grid,
        actions=per_state,
        residuals=[res for _, res, _ in results],
        iterations=[it for _, _, it in results],
    )


def action_share(sweep: SweepResult) -> dict:
    """Fraction of observer states choosing each action kind, per grid point."""
    kinds = sweep.kinds()
    n = kinds.shape[0]
    return {k: (kinds == k).sum(axis=0) / n for k in KINDS}


@dataclass
class Switch:
    state: int
    r_before: float
    r_after: float
    from_action: object
    to_action: object

    @property
    def r_switch(self) -> float:
        return (self.r_before + self.r_after) / 2


@dataclass
class ThresholdReport:
    switches: list
    reversals: list  # switches that move to a costlier action kind
    null_escapes: list  # switches that leave the null action

    @property
    def monotone(self) -> bool:
        return not self.reversals

    @property
    def null_absorbing(self) -> bool:
        return not self.null_escapes

    def for_state(self, s: int) -> list:
        return [sw for sw in self.switches if sw.state == s]

    def kind_switches(self, s: int) -> list:
        """Switches of state ``s`` that change the action kind."""
        return [sw for sw in self.for_state(s) if action_kind(sw.from_action) != action_kind(sw.to_action)]


def detect_thresholds(sweep: SweepResult) -> ThresholdReport:
    """Every action change along the grid, plus the monotonicity verdicts.

    A switch is a reversal when the action kind gets costlier
    (null < sense < reimage).  Switches within a kind, such as re-imaging a
    different computer, are reported but never count as reversals.
    """
    r = sweep.r_values
    switches, reversals, escapes = [], [], []
    for s, row in enumerate(sweep.actions):
        for j in range(1, len(r)):
            if row[j] != row[j - 1]:
                sw = Switch(s, r[j - 1], r[j], row[j - 1], row[j])
                switches.append(sw)
                a, b = action_kind(row[j - 1]), action_kind(row[j])
                if _RANK[b] > _RANK[a]:
                    reversals.append(sw)
                if a == "null":
                    escapes.append(sw)
    return ThresholdReport(switches, reversals, escapes)


def write_sweep(sweep: SweepResult, out_dir, manifest: dict | None = None) -> dict:
    """Write actions.csv, shares.csv, thresholds.csv and manifest.json; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name)
             for name in ("actions.csv", "shares.csv", "thresholds.csv", "manifest.json")}
    with open(paths["actions.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state_index", "r", "action"])
        for s, row in enumerate(sweep.actions):
            for r, d in zip(sweep.r_values, row):
                w.writerow([s, f"{r:g}", d.name])
    shares = action_share(sweep)
    with open(paths["shares.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "kind", "fraction"])
        for j, r in enumerate(sweep.r_values):
            for k in KINDS:
                w.writerow([f"{r:g}", k, f"{shares[k][j]:.12g}"])
    report = detect_thresholds(sweep)
    with open(paths["thresholds.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state_index", "r_switch", "from", "to"])
        for sw in report.switches:
            w.writerow([sw.state, f"{sw.r_switch:g}", sw.from_action.name, sw.to_action.name])
    doc = dict(manifest or {})
    doc.update({
        "n_states": sweep.n_states,
        "r_values": [float(r) for r in sweep.r_values],
        "max_residual": float(max(sweep.residuals)) if sweep.residuals else None,
        "monotone": report.monotone,
        "null_absorbing": report.null_absorbing,
        "n_switches": len(report.switches),
    })
    with open(paths["manifest.json"], "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
