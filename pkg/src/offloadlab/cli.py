"""Command line entry point: offloadlab {sim,bench,oracle-check,plotdata,capacity}.

Exit codes: 0 success, 1 config error, 2 invariant breach.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import actor as act
from .checks import oracle_check
from .config import load_config
from .harness import (
    CSV_SELECTORS,
    CapacityError,
    bench_runtime,
    emit_csv,
    estimate_capacity,
    load_records,
    run,
    write_run_dir,
)
from .model import ConfigError, InvariantError

log = logging.getLogger("offloadlab")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def cmd_sim(args) -> int:
    cfg, ec, tc = load_config(args.config, scenario=args.scenario)
    if args.slots is not None:
        ec.slots = args.slots
    if args.seed is not None:
        ec.seed = args.seed
    if args.policy is not None:
        ec.policy = args.policy
    out = args.out or ec.output_dir
    if out is None:
        raise ConfigError("no output directory: pass --out or set experiment.output_dir")
    ec.output_dir = str(out)
    result = run(ec, cfg, tc, progress=not args.quiet)
    write_run_dir(result, out, tc)
    s = result.summary
    print(f"{ec.scenario}[{ec.policy}] slots={s.slots} mean_utility={s.mean_utility:.6g} "
          f"mean_ncr={s.mean_ncr:.4f} converged_at={s.converged_at} queue_ratio={s.queue_ratio:.3f}")
    print(f"wrote {out}")
    return 0


def cmd_bench(args) -> int:
    cfg, _, _ = load_config(args.config) if args.config else load_config()
    checkpoints = {}
    for path in args.checkpoint or []:
        model, _, _ = act.checkpoint_load(path)
        checkpoints[model.layer_dims[-1]] = path
    rows = bench_runtime(args.methods.split(","), args.n, args.trials, cfg, checkpoints, args.seed)
    if args.out:
        emit_csv(rows, "bench", args.out)
        print(f"wrote {args.out}")
    else:
        print("method,n,trials,mean_us,p95_us,mean_calls")
        for r in rows:
            print(f"{r.method},{r.n},{r.trials},{r.mean_us:.1f},{r.p95_us:.1f},{r.mean_calls:.1f}")
    return 0


def cmd_oracle_check(args) -> int:
    failures = 0
    worst = 0.0
    for i, n, cmp in oracle_check(args.instances, args.n, args.mode, args.seed, args.resolution):
        if args.mode == "wpt":
            ok = abs(cmp.rel_gap) <= args.tol
            worst = max(worst, abs(cmp.rel_gap))
        else:
            ok = cmp.ratio >= 1 - args.tol
            worst = max(worst, 1 - cmp.ratio)
        if not ok:
            failures += 1
            print(f"instance {i} (N={n}): solver={cmp.solver:.9g} oracle={cmp.oracle:.9g}")
    print(f"oracle-check {args.mode}: {args.instances - failures}/{args.instances} within tolerance, "
          f"worst gap {worst:.3g}")
    return 0 if failures == 0 else 2


def cmd_plotdata(args) -> int:
    run_dir = Path(args.run)
    try:
        records = load_records(run_dir / "records.npz")
        snapshot = json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"{run_dir} is not a run directory: {exc}") from exc
    window = snapshot["experiment"]["metric_window"]
    slot_len = snapshot["system"]["slot_len"]
    out = Path(args.out) if args.out else run_dir / f"{args.what}.csv"
    emit_csv(records, args.what, out, window, slot_len)
    print(f"wrote {out}")
    return 0


def cmd_capacity(args) -> int:
    cfg, _, _ = load_config(args.config) if args.config else load_config()
    details = {}
    cap = estimate_capacity(cfg, args.probes, args.horizon, args.seed, details)
    for lam, ratio in details.items():
        print(f"lambda={lam:.6g} queue_ratio={ratio:.3f}")
    print(f"capacity={cap:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="offloadlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sim", help="run a DROO or LyDROO experiment")
    s.add_argument("scenario", choices=("droo", "lydroo"))
    s.add_argument("--config", help="YAML/JSON config file")
    s.add_argument("--slots", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--policy", choices=("actor", "lycd", "myopic"))
    s.add_argument("--out", help="run directory")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_sim)

    b = sub.add_parser("bench", help="per-decision runtime table")
    b.add_argument("--methods", default="droo,cd")
    b.add_argument("--n", type=_int_list, default=[10])
    b.add_argument("--trials", type=int, default=100)
    b.add_argument("--checkpoint", action="append", help="trained actor (repeat for several N)")
    b.add_argument("--config")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="CSV path (default: print to stdout)")
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("oracle-check", help="compare the critic against the grid oracle")
    o.add_argument("--instances", type=int, default=200)
    o.add_argument("--n", type=_int_list, default=[4])
    o.add_argument("--mode", choices=("wpt", "lyapunov"), default="wpt")
    o.add_argument("--resolution", type=float, default=0.01)
    o.add_argument("--tol", type=float, default=None,
                   help="relative tolerance (default 1e-3 wpt, 0.02 lyapunov)")
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(func=cmd_oracle_check)

    d = sub.add_parser("plotdata", help="emit a CSV series from a run directory")
    d.add_argument("--run", required=True)
    d.add_argument("--what", required=True, choices=[c for c in CSV_SELECTORS if c != "bench"])
    d.add_argument("--out")
    d.set_defaults(func=cmd_plotdata)

    c = sub.add_parser("capacity", help="estimate the stable arrival rate with LyCD")
    c.add_argument("--probes", type=_float_list, required=True)
    c.add_argument("--horizon", type=int, default=5000)
    c.add_argument("--config")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_capacity)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "tol", 0) is None:
        args.tol = 1e-3 if args.mode == "wpt" else 0.02
    try:
        return args.func(args)
    except (ConfigError, CapacityError, act.CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvariantError as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
