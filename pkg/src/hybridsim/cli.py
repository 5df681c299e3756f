"""Command-line front end.

Exit codes: 0 on success, 2 for config or usage errors, 3 for numerical
failures during a run. Every command that writes files also writes a JSON
run manifest next to them.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import io
from .errors import ConfigError, NumericalError, SchemaViolationError
from .flow import classify_fixed_point, find_fixed_points
from .hybrid import HybridState, HybridSystemSpec, simulate, spider
from .limitset import estimate_limit_set, hitting_experiment
from .markov import stationary_distribution
from .measure import coarsen, default_refine, invariance_report, marginalize, phase_family
from .systems import load_system

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def read_config(path) -> dict[str, Any]:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise SchemaViolationError("<document>", f"invalid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaViolationError("<root>", "config must be a mapping")
    return doc


class Run:
    """Bookkeeping for one invocation: config, hash, produced files, manifest."""

    def __init__(self, args, command: str):
        self.started = time.perf_counter()
        self.command = command
        self.args = args
        self.config = read_config(args.config)
        self.spec: HybridSystemSpec = load_system(self.config)
        self.hash = io.config_hash(self.config)
        self.files: list[Path] = []

    def meta(self, **extra) -> dict[str, Any]:
        return {
            "config_hash": self.hash,
            "system": self.spec.name,
            "state_values": " ".join(repr(float(v)) for v in self.spec.fields.state_values),
            **extra,
        }

    def initial(self) -> HybridState:
        base = self.spec.initial or HybridState(np.zeros(self.spec.dim), 0)
        x = self.args.x0 if getattr(self.args, "x0", None) is not None else base.x
        z = self.args.z0 if getattr(self.args, "z0", None) is not None else base.state
        if len(x) != self.spec.dim:
            raise UsageError(f"--x0 needs {self.spec.dim} coordinates")
        if not 0 <= z < self.spec.n_states:
            raise UsageError(f"--z0 must be in [0, {self.spec.n_states})")
        return HybridState(x, z)

    def add(self, path: Path) -> Path:
        self.files.append(Path(path))
        return path

    def finish(self, manifest_path: Path) -> None:
        params = {
            k: v for k, v in sorted(vars(self.args).items())
            if k not in ("func", "config") and not callable(v)
        }
        manifest = {
            "command": self.command,
            "config_hash": self.hash,
            "config_path": str(self.args.config),
            "seed": getattr(self.args, "seed", None),
            "parameters": params,
            "files": [str(p) for p in self.files],
            "wall_clock_seconds": round(time.perf_counter() - self.started, 6),
        }
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _manifest_for(path: Path) -> Path:
    return path.with_name(path.name + ".manifest.json")


def cmd_simulate(args) -> int:
    run = Run(args, "simulate")
    y0 = run.initial()
    sample_dt = args.sample_dt or run.spec.h / 50
    traj = simulate(run.spec, y0, args.t_end, sample_dt, args.seed)
    out = Path(args.out)
    cols = ["time", "state"] + [f"x{i + 1}" for i in range(run.spec.dim)]
    rows = (
        (float(t), int(s), *map(float, x))
        for t, s, x in zip(traj.times, traj.states, traj.positions)
    )
    run.add(io.write_table(out, cols, rows, run.meta(seed=args.seed, h=run.spec.h, units="time in model units")))
    run.finish(_manifest_for(out))
    return EXIT_OK


def cmd_spider(args) -> int:
    run = Run(args, "spider")
    y0 = run.initial()
    tree = spider(run.spec, y0, args.t0, args.depth, args.max_nodes)
    out = Path(args.out)
    cols = ["level", "node", "parent", "state", "probability"] + [f"x{i + 1}" for i in range(run.spec.dim)]
    rows, offset, prev_offset = [], 0, -1
    for level, lvl in enumerate(tree.levels):
        for k in range(len(lvl)):
            parent = -1 if level == 0 else prev_offset + int(lvl.parents[k])
            rows.append((level, offset + k, parent, int(lvl.states[k]), float(lvl.probs[k]), *map(float, lvl.positions[k])))
        prev_offset, offset = offset, offset + len(lvl)
    run.add(io.write_table(out, cols, rows, run.meta(t0=args.t0, depth=args.depth)))
    run.finish(_manifest_for(out))
    return EXIT_OK


def cmd_stationary(args) -> int:
    run = Run(args, "stationary")
    pi = stationary_distribution(run.spec.Q)
    for i, (v, p) in enumerate(zip(run.spec.fields.state_values, pi)):
        print(f"state {i} (Z={float(v)!r}): {float(p)!r}")
    if args.out:
        out = Path(args.out)
        rows = [(i, float(v), float(p)) for i, (v, p) in enumerate(zip(run.spec.fields.state_values, pi))]
        run.add(io.write_table(out, ["state", "value", "probability"], rows, run.meta()))
        run.finish(_manifest_for(out))
    return EXIT_OK


def cmd_measure(args) -> int:
    run = Run(args, "measure")
    h = run.spec.h
    if args.phases is not None:
        phases = args.phases
    else:
        phases = [k * h / args.n_phases for k in range(args.n_phases)]
    bad = [t for t in phases if not 0 <= t < h]
    if bad:
        raise UsageError(f"phases must lie in [0, h={h}), got {bad}")
    if args.n_samples < 1 or args.burn_in < 0 or args.chains < 1:
        raise UsageError("need --n-samples >= 1, --burn-in >= 0, --chains >= 1")
    refine = args.refine or default_refine(run.spec.dim)
    family = phase_family(
        run.spec, run.initial(), phases, args.burn_in, args.n_samples, args.seed,
        n_chains=args.chains, refine=refine,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = []
    for k, mu in enumerate(family):
        tv = invariance_report(run.spec, mu, refine, args.subdivisions)
        coarse = coarsen(mu, refine)
        meta = run.meta(seed=args.seed, n_samples=args.n_samples, burn_in=args.burn_in)
        run.add(io.write_measure(out_dir / f"measure_phase{k}.txt", coarse, meta))
        run.add(io.write_measure(out_dir / f"marginal_phase{k}.txt", marginalize(coarse), meta))
        report.append((k, float(mu.t0), tv))
        print(f"phase {mu.t0!r}: TV(pushforward(mu, h), mu) = {tv:.6f}")
    run.add(io.write_table(out_dir / "tv_report.txt", ["phase_index", "t0", "tv"], report,
                           run.meta(seed=args.seed, refine=refine)))
    run.finish(out_dir / "manifest.json")
    return EXIT_OK


def cmd_limitset(args) -> int:
    run = Run(args, "limitset")
    ls = estimate_limit_set(
        run.spec, run.initial(), args.t_total, args.sample_dt, args.burn_in,
        args.revisit_threshold, args.seed,
    )
    out = Path(args.out)
    run.add(io.write_limit_set(out, ls, run.meta(seed=args.seed, t_total=args.t_total)))
    if len(ls):
        c = ls.centers()
        print(f"{len(ls)} cells; centers span {c.min(axis=0).tolist()} .. {c.max(axis=0).tolist()}")
    else:
        print("0 cells")
    run.finish(_manifest_for(out))
    return EXIT_OK


def cmd_hitting(args) -> int:
    run = Run(args, "hitting")
    x0 = args.x0[0] if args.x0 is not None else 1.0
    z0 = args.z0 if args.z0 is not None else 0
    res = hitting_experiment(run.spec, x0, z0, args.x_star, args.m, args.trials, args.seed, args.threads)
    row = (args.x_star, args.m, res.k, res.p_lower, res.bound, res.rate, res.standard_error, int(res.passes()))
    print(f"x_star={args.x_star!r} m={args.m} k={res.k} p_lower={res.p_lower!r} "
          f"bound={res.bound:.6f} empirical={res.rate:.6f} se={res.standard_error:.2e} "
          f"{'OK' if res.passes() else 'BELOW BOUND'}")
    if args.out:
        out = Path(args.out)
        cols = ["x_star", "m", "k", "p_lower", "bound", "empirical", "se", "ok"]
        run.add(io.write_table(out, cols, [row], run.meta(seed=args.seed, x0=x0, z0=z0, trials=args.trials)))
        run.finish(_manifest_for(out))
    return EXIT_OK


def cmd_fixed_points(args) -> int:
    run = Run(args, "fixed-points")
    seeds = [args.seed_point[i:i + run.spec.dim] for i in range(0, len(args.seed_point), run.spec.dim)]
    for root in find_fixed_points(run.spec.fields, args.state, seeds):
        kind = classify_fixed_point(run.spec.fields, root, args.state)
        print(" ".join(repr(float(v)) for v in root), kind)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hybridsim", description="Markov-switched flows: simulation, spiders, measures, limit sets")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text, out=True, out_required=True, initial=True, seed=True):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="system config (YAML)")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: all cores; HYBRIDSIM_THREADS overrides)")
        if out:
            sp.add_argument("--out", required=out_required, default=None, help="output file")
        if initial:
            sp.add_argument("--x0", type=_floats, default=None, help="initial position, comma-separated")
            sp.add_argument("--z0", type=int, default=None, help="initial state index")
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        sp.set_defaults(func=func)
        return sp

    sp = add("simulate", cmd_simulate, "one random trajectory")
    sp.add_argument("--t-end", type=float, default=50.0)
    sp.add_argument("--sample-dt", type=float, default=None, help="default h/50")

    sp = add("spider", cmd_spider, "enumerate all switching branches", seed=False)
    sp.add_argument("--t0", type=float, default=0.0)
    sp.add_argument("--depth", type=int, default=5)
    sp.add_argument("--max-nodes", type=int, default=10**6)

    add("stationary", cmd_stationary, "stationary distribution of Q", out_required=False, initial=False, seed=False)

    sp = add("measure", cmd_measure, "phase-indexed empirical invariant measures", out=False)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--phases", type=_floats, default=None, help="phases in [0, h), comma-separated")
    sp.add_argument("--n-phases", type=int, default=6, help="equally spaced phases when --phases is absent")
    sp.add_argument("--burn-in", type=int, default=1000, help="discarded switching periods")
    sp.add_argument("--n-samples", type=int, default=10**6)
    sp.add_argument("--chains", type=int, default=1000,
                    help="independent chains sharing the sample budget (1 = one long trajectory)")
    sp.add_argument("--refine", type=int, default=None, help="transport-grid refinement per axis")
    sp.add_argument("--subdivisions", type=int, default=None, help="representative points per cell and axis")

    sp = add("limitset", cmd_limitset, "estimate the stochastic limit set")
    sp.add_argument("--t-total", type=float, default=2000.0)
    sp.add_argument("--sample-dt", type=float, default=None, help="default h/50")
    sp.add_argument("--burn-in", type=float, default=50.0, help="discarded time units")
    sp.add_argument("--revisit-threshold", type=int, default=3)

    sp = add("hitting", cmd_hitting, "hitting-probability experiment (1-D system)", out_required=False)
    sp.add_argument("--x-star", type=float, required=True)
    sp.add_argument("--m", type=int, default=1)
    sp.add_argument("--trials", type=int, default=10**5)

    sp = add("fixed-points", cmd_fixed_points, "Newton fixed points of one state's field",
             out=False, initial=False, seed=False)
    sp.add_argument("--state", type=int, required=True)
    sp.add_argument("--seed-point", type=_floats, required=True,
                    help="flattened starting points, e.g. '.67,.09,2.64,.41'")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"hybridsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"hybridsim: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, TypeError) as exc:
        print(f"hybridsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
