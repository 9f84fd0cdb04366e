"""Command line entry point: ``sentinel <command> ...``.

Exit codes: 0 success, 1 other failure, 2 configuration error,
3 capacity error, 4 non-convergence.  Artifacts go to ``--out`` when given,
else to ``output_dir`` from the config, else to ``$SENTINEL_OUT``, else to
``./sentinel-out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, model
from .automaton import build_system_automaton, export_dot, export_fsm
from .config import RunConfig, config_from_dict, load_config
from .errors import CapacityError, ConfigError, NonConvergenceError, SentinelError
from .experiments import detect_thresholds, sweep_reimage, write_sweep
from .model import ModelFlags, parse_event
from .observer import build_observer_automaton, export_observer_dot, export_observer_fsm
from .sim import ADVERSARIES, make_adversary, simulate
from .solver import Policy, ValueFunction, solve

log = logging.getLogger("sentinel")

OUT_ENV = "SENTINEL_OUT"
EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_CAPACITY, EXIT_NONCONVERGENCE = 0, 1, 2, 3, 4


def default_out_dir(cfg: RunConfig) -> str:
    return cfg.output_dir or os.environ.get(OUT_ENV) or "sentinel-out"


def _manifest(cfg: RunConfig, command: str, **extra) -> dict:
    doc = {"tool": "sentinel", "version": __version__, "command": command,
           "config": cfg.to_dict(), "config_hash": cfg.digest()}
    doc.update(extra)
    return doc


def _write_json(path, doc):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _observer(cfg: RunConfig):
    return build_observer_automaton(cfg.k, cfg.observer.seed_state(cfg.k), cfg.model,
                                    cfg.observer.start_phase, cfg.max_states)


# -- policy files -------------------------------------------------------------

POLICY_HEADER = "# sentinel policy"


def format_policy(policy: Policy, cfg: RunConfig) -> str:
    """One tab-separated record per observer state, preceded by the config as JSON."""
    lines = [POLICY_HEADER,
             "# config " + json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":")),
             "# index\tcandidates\tvalue\taction\toptimal"]
    for s, S in enumerate(policy.obs_aut.states):
        optimal = ",".join(d.name for d in policy.optimal_sets[s])
        lines.append(f"{s}\t{S.name}\t{float(policy.value.values[s]):.17g}\t{policy.actions[s].name}\t{optimal}")
    return "\n".join(lines) + "\n"


def read_policy(path) -> tuple:
    """Rebuild ``(Policy, RunConfig)`` from a policy file."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read policy {path}: {exc}") from exc
    if not lines or lines[0] != POLICY_HEADER or not lines[1].startswith("# config "):
        raise ConfigError(f"{path} is not a policy file")
    cfg = config_from_dict(json.loads(lines[1][len("# config "):]))
    obs_aut = _observer(cfg)
    records = [ln.split("\t") for ln in lines if ln and not ln.startswith("#")]
    if len(records) != obs_aut.n_states:
        raise ConfigError(f"{path} has {len(records)} records, the observer has {obs_aut.n_states} states")
    actions, optimal, values = [], [], []
    for s, (idx, cands, value, action, opt) in enumerate(records):
        if int(idx) != s or cands != obs_aut.states[s].name:
            raise ConfigError(f"{path}: record {s} does not match observer state {obs_aut.states[s].name}")
        values.append(float(value))
        actions.append(parse_event(action))
        optimal.append(tuple(parse_event(x) for x in opt.split(",")))
    value = ValueFunction(np.asarray(values, dtype=np.longdouble), cfg.costs.beta)
    return Policy(obs_aut, cfg.costs, actions, optimal, value), cfg


# -- commands -----------------------------------------------------------------


def cmd_model_export(cfg: RunConfig, fmt: str = "fsm", out=None) -> dict:
    aut = build_system_automaton(cfg.k, cfg.model, cfg.max_states)
    out = out or os.path.join(default_out_dir(cfg), f"model_k{cfg.k}.{fmt}")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    (export_fsm if fmt == "fsm" else export_dot)(aut, out)
    n_trans = sum(1 for _ in aut.transitions())
    _write_json(out + ".manifest.json", _manifest(cfg, "model export", format=fmt,
                                                  states=aut.n_states, transitions=n_trans))
    print(f"states={aut.n_states} transitions={n_trans}")
    return {"path": out}


def cmd_observer_build(cfg: RunConfig, fmt: str = "fsm", out=None) -> dict:
    obs_aut = _observer(cfg)
    tally = obs_aut.transition_tally()
    out = out or os.path.join(default_out_dir(cfg), f"observer_k{cfg.k}.{fmt}")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    (export_observer_fsm if fmt == "fsm" else export_observer_dot)(obs_aut, out)
    _write_json(out + ".manifest.json", _manifest(
        cfg, "observer build", format=fmt, states=obs_aut.n_states,
        transitions=tally["composite"], bipartite_transitions=tally["bipartite"],
        intermediate_states=len(obs_aut.intermediate_states)))
    print(f"states={obs_aut.n_states} transitions={tally['composite']}")
    return {"path": out}


def cmd_solve(cfg: RunConfig, out=None) -> dict:
    obs_aut = _observer(cfg)
    policy = solve(obs_aut, cfg.costs, cfg.solver)
    out = out or default_out_dir(cfg)
    os.makedirs(out, exist_ok=True)
    paths = {"policy": os.path.join(out, "policy.txt"), "summary": os.path.join(out, "summary.json")}
    with open(paths["policy"], "w") as fh:
        fh.write(format_policy(policy, cfg))
    counts = {k: 0 for k in ("null", "sense", "reimage")}
    for d in policy.actions:
        counts[model.action_kind(d)] += 1
    entry = obs_aut.entry[0]
    summary = _manifest(
        cfg, "solve", states=obs_aut.n_states, iterations=policy.iterations,
        residual=policy.residual, error_bound=policy.value.error_bound,
        entry_state=obs_aut.states[entry].name, entry_value=float(policy.value[entry]),
        action_counts=counts)
    _write_json(paths["summary"], summary)
    print(f"states={obs_aut.n_states} iterations={policy.iterations} residual={policy.residual:.3g}")
    return paths


def cmd_sweep(cfg: RunConfig, out=None) -> dict:
    obs_aut = _observer(cfg)
    sw = cfg.sweep
    result = sweep_reimage(obs_aut, cfg.costs, sw.r_from, sw.r_to, sw.r_step, cfg.solver, cfg.workers)
    out = out or default_out_dir(cfg)
    manifest = _manifest(cfg, "sweep", iterations=[int(i) for i in result.iterations],
                         residuals=[float(r) for r in result.residuals])
    paths = write_sweep(result, out, manifest)
    report = detect_thresholds(result)
    print(f"states={obs_aut.n_states} points={len(result.r_values)} switches={len(report.switches)} "
          f"monotone={str(report.monotone).lower()} null_absorbing={str(report.null_absorbing).lower()}")
    return paths


def cmd_simulate(policy_path, adversary="uniform", seed=None, horizon=100, script=(), z0=None,
                 out=None, episodes=1) -> dict:
    policy, cfg = read_policy(policy_path)
    seed = cfg.seed if seed is None else seed
    if isinstance(script, str):
        script = [parse_event(x) for x in script.replace(",", " ").split()]
    chunks = []
    for ep in range(episodes):
        adv = make_adversary(adversary, seed + ep, policy.value, script, policy.cm)
        trace = simulate(policy, adv, Z0=z0, horizon=horizon)
        for step in trace.steps:
            rec = {"episode": ep, **step.to_record(policy.obs_aut)}
            chunks.append(json.dumps(rec) + "\n")
        chunks.append(json.dumps({"episode": ep, "summary": True, "discounted_total": trace.discounted_total,
                                  "sound": trace.sound, "horizon": horizon}) + "\n")
    text = "".join(chunks)
    if out:
        os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return {"path": out}


def run_pipeline(config: RunConfig, command: str, **options) -> int:
    """Run one command and map failures to exit codes."""
    handlers = {"model export": cmd_model_export, "observer build": cmd_observer_build,
                "solve": cmd_solve, "sweep": cmd_sweep}
    try:
        if command == "simulate":
            cmd_simulate(**options)
        else:
            handlers[command](config, **options)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except NonConvergenceError as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (SentinelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _common(p, k_required=False):
    p.add_argument("--k", type=int, required=k_required, help="number of computers")
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--h-on-w", type=_bool, default=None, metavar="true|false",
                   help="allow network attacks on computers already at W")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sentinel", description="Defender policies for a network under progressive attack.")
    parser.add_argument("--version", action="version", version=f"sentinel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_model = sub.add_parser("model", help="system automaton").add_subparsers(dest="action", required=True)
    p = p_model.add_parser("export", help="export the system automaton")
    _common(p)
    p.add_argument("--format", choices=("fsm", "dot"), default="fsm")
    p.add_argument("--out", help="output file")

    p_obs = sub.add_parser("observer", help="observer automaton").add_subparsers(dest="action", required=True)
    p = p_obs.add_parser("build", help="build and export the observer automaton")
    _common(p)
    p.add_argument("--format", choices=("fsm", "dot"), default="fsm")
    p.add_argument("--out", help="output file")

    p = sub.add_parser("solve", help="value iteration and policy extraction")
    _common(p)
    p.add_argument("--tol", type=float, help="stopping tolerance on the sup-norm change")
    p.add_argument("--r", type=float, help="re-image cost, overriding the config")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("sweep", help="re-image cost sweep")
    _common(p)
    p.add_argument("--r-from", type=float)
    p.add_argument("--r-to", type=float)
    p.add_argument("--r-step", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="play a policy file against an adversary")
    p.add_argument("--policy", required=True, help="policy file written by solve")
    p.add_argument("--adversary", choices=ADVERSARIES, default="uniform")
    p.add_argument("--seed", type=int, help="adversary seed (default: the seed in the policy's config)")
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--script", default="", help="events for the script adversary, e.g. 'P1.1 Na H1.2'")
    p.add_argument("--z0", help="true initial state, e.g. NN")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.k is not None:
        if args.k < 1:
            raise ConfigError(f"--k must be at least 1, got {args.k}")
        if cfg.observer.seed not in (None, "all") and args.k != cfg.k:
            raise ConfigError(f"--k {args.k} conflicts with the observer seed for k={cfg.k}")
        cfg.k = args.k
    if args.h_on_w is not None:
        cfg.model = ModelFlags(h_admissible_on_w=args.h_on_w)
    if getattr(args, "tol", None) is not None:
        cfg.solver = replace(cfg.solver, tolerance=args.tol)
    if getattr(args, "r", None) is not None:
        cfg.costs = cfg.costs.with_reimage_cost(args.r)
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    for name in ("r_from", "r_to", "r_step"):
        if getattr(args, name, None) is not None:
            setattr(cfg.sweep, name, getattr(args, name))
    # revalidate after overrides
    return config_from_dict(cfg.to_dict())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "simulate":
        return run_pipeline(None, "simulate", policy_path=args.policy, adversary=args.adversary,
                            seed=args.seed, horizon=args.horizon, script=args.script, z0=args.z0,
                            out=args.out, episodes=args.episodes)
    try:
        cfg = _config(args)
    except (ConfigError, ValueError) as exc:
        for v in getattr(exc, "violations", [str(exc)]):
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    command = f"{args.command} {args.action}" if hasattr(args, "action") else args.command
    options = {"out": args.out}
    if hasattr(args, "format"):
        options["fmt"] = args.format
    return run_pipeline(cfg, command, **options)


if __name__ == "__main__":
    sys.exit(main())
