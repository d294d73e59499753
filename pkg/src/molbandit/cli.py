"""Command-line entry point.

Subcommands: run (execute an experiment), plot (rebuild SVGs from existing
cycles.csv files), validate-config (parse and echo the resolved config), and
bench (micro-benchmarks of the distance and index kernels).

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bandit, config, harness, plots
from .fingerprint import jaccard_distance, morgan_fingerprint_batch
from .generator import random_molecule
from .harness import CYCLES_COLUMNS, CycleRecord, RunResult


def _build_parser():
    parser = argparse.ArgumentParser(prog="molbandit")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a selection-strategy experiment")
    _add_override_flags(run_p)
    run_p.add_argument("--emit-plots", action="store_true", help="write SVG charts")

    plot_p = sub.add_parser("plot", help="render SVGs from existing run CSVs")
    plot_p.add_argument("--runs", required=True, help="experiment output directory")
    plot_p.add_argument("--out", default=None, help="plot directory (default: <runs>/plots)")

    val_p = sub.add_parser("validate-config", help="parse and validate a config file")
    _add_override_flags(val_p)

    bench_p = sub.add_parser("bench", help="micro-benchmark distance/index kernels")
    bench_p.add_argument("--n", type=int, default=2000, help="sample size")
    return parser


def _add_override_flags(p):
    p.add_argument("--config", default=None, help="flat key = value config file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seeds", default=None, help="comma-separated master seeds")
    p.add_argument("--strategy", action="append", default=None,
                   help="strategy name (repeatable): " + ", ".join(harness.STRATEGY_NAMES))
    p.add_argument("--cycles", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--paper-scale", action="store_true", default=None)
    p.add_argument("--dump-balls", action="store_true", default=None)


def _overrides_from_args(args) -> dict:
    overrides = {}
    if args.out is not None:
        overrides["out"] = args.out
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    if args.strategy:
        overrides["strategies"] = list(args.strategy)
    if args.cycles is not None:
        overrides["cycles"] = args.cycles
    if args.k is not None:
        overrides["k"] = args.k
    if args.paper_scale:
        overrides["paper_scale"] = True
    if args.dump_balls:
        overrides["dump_balls"] = True
    return overrides


def _load_config(args):
    return config.parse_config(args.config, _overrides_from_args(args))


def cmd_run(args) -> int:
    try:
        cfg = _load_config(args)
    except (config.ParseError, config.ValidationError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(cfg.out)
    result = harness.run_experiment(cfg, out_dir=out_dir, log_fn=lambda msg: print(msg, flush=True))
    for name, seed, err in result.failures:
        print(f"FAILED strategy={name} seed={seed}: {err}", file=sys.stderr)
    if result.runs and args.emit_plots:
        paths = plots.emit_plots(result.runs, out_dir / "plots")
        for p in paths:
            print(f"wrote {p}")
    print(f"completed {len(result.runs)} runs, {len(result.failures)} failures")
    return 0 if not result.failures else 3


def _parse_csv_cell(text, kind):
    if text == "":
        return None
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def load_runs_csv(root) -> list[RunResult]:
    """Rebuild enough of each run from runs/<strategy>/seed*/cycles.csv to
    re-aggregate and re-plot."""
    root = Path(root)
    runs = []
    for cycles_path in sorted(root.glob("runs/*/seed*/cycles.csv")):
        records = []
        strategy = None
        seed_name = cycles_path.parent.name
        with open(cycles_path) as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != CYCLES_COLUMNS:
                raise ValueError(f"{cycles_path}: unexpected columns {header}")
            for line in fh:
                cells = line.rstrip("\n").split(",")
                row = dict(zip(CYCLES_COLUMNS, cells))
                strategy = row["strategy"]
                records.append(
                    CycleRecord(
                        t=int(row["t"]),
                        strategy=strategy,
                        horizon=_parse_csv_cell(row["horizon"], int),
                        epsilon=_parse_csv_cell(row["epsilon"], float),
                        n_balls=_parse_csv_cell(row["n_balls"], int),
                        n_candidates=int(row["n_candidates"]),
                        gen_iterations=int(row["gen_iterations"]),
                        gen_rejects=int(row["gen_rejects"]),
                        gen_buckets=int(row["gen_buckets"]),
                        min_score_relaxed=row["min_score_relaxed"] == "1",
                        round_reward=int(row["round_reward"]),
                        cum_reward=int(row["cum_reward"]),
                        norm_cum_reward=float(row["norm_cum_reward"]),
                        novelty=_parse_csv_cell(row["novelty"], float),
                        mean_reward_novelty=_parse_csv_cell(row["mean_reward_novelty"], float),
                        selected=[int(h, 16) for h in row["selected"].split(";") if h],
                        rewards=[int(r) for r in row["rewards"].split(";") if r],
                        wall_ms=0.0,
                    )
                )
        if records:
            runs.append(
                RunResult(
                    strategy=strategy,
                    seed=int(seed_name.removeprefix("seed")),
                    records=records,
                    summary={},
                    config={},
                )
            )
    return runs


def cmd_plot(args) -> int:
    try:
        runs = load_runs_csv(args.runs)
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if not runs:
        print(f"config error: no cycles.csv found under {args.runs}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path(args.runs) / "plots"
    for p in plots.emit_plots(runs, out):
        print(f"wrote {p}")
    return 0


def cmd_validate_config(args) -> int:
    try:
        cfg = _load_config(args)
    except (config.ParseError, config.ValidationError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(cfg.as_dict(), indent=2, sort_keys=True))
    return 0


def _time(label, fn, number):
    start = time.perf_counter()
    for _ in range(number):
        fn()
    elapsed = time.perf_counter() - start
    print(f"{label:<34} {number / elapsed:>12.0f} ops/s")


def cmd_bench(args) -> int:
    rng = np.random.default_rng(7)
    mols = [random_molecule(rng) for _ in range(args.n)]
    start = time.perf_counter()
    fps = morgan_fingerprint_batch(mols)
    fp_rate = args.n / (time.perf_counter() - start)
    print(f"{'morgan_fingerprint (batched)':<34} {fp_rate:>12.0f} ops/s")

    pairs = [(fps[int(rng.integers(args.n))], fps[int(rng.integers(args.n))]) for _ in range(1000)]
    it = iter(range(10**9))
    _time("jaccard_distance", lambda: jaccard_distance(*pairs[next(it) % 1000]), 20000)

    root = bandit.Ball(center=fps[0], radius=1.0, n=10, rew=4)
    active = bandit.ActiveSet(root)
    for i in range(1, 32):
        active.add(bandit.Ball(center=fps[i], radius=0.5 if i % 2 else 0.25, n=i, rew=i // 2))
    sample = fps[:256]
    _time("assign_domains (256 arms, 32 balls)", lambda: bandit.assign_domains(active, sample), 20)
    _time("ball_index", lambda: bandit.ball_index(active[3], active, 64), 2000)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "plot": cmd_plot,
        "validate-config": cmd_validate_config,
        "bench": cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except KeyboardInterrupt:
        return 3
    except Exception as exc:  # runtime failure surface
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
