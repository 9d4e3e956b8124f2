"""Command-line front end: run experiments, sweep parameters, check histories.

Exit codes are a stable contract:
  run/sweep: 0 success, 2 configuration error, 3 internal invariant violation
  check: 0 model satisfied, 1 violated, 2 parse or search-bound error
"""

from __future__ import annotations

import argparse
import os
import sys

from . import bench
from .checkers import (
    AmbiguousReadFrom,
    BoundExceeded,
    CheckerError,
    check_causal,
    check_linearizable,
    check_pram,
    check_sequential,
)
from .config import load_config
from .history import History, HistoryError
from .store import ConfigError

SEED_ENV = "CONSISTENCY_LAB_SEED"

_MODELS = {
    "lin": check_linearizable,
    "seq": check_sequential,
    "causal": check_causal,
    "pram": check_pram,
}


def _load(path: str):
    cfg = load_config(path)
    if SEED_ENV in os.environ:
        seed = int(os.environ[SEED_ENV])
        cfg.seed = seed
        cfg.workload.seed = seed
    return cfg


def _write(path: str, text: str):
    with open(path, "w") as f:
        f.write(text)


def cmd_run(args) -> int:
    try:
        cfg = _load(args.config)
    except (ConfigError, OSError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        res = bench.run_experiment(cfg)
    except (ConfigError,) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (AssertionError, CheckerError, RuntimeError) as e:
        print(f"internal invariant violation: {e!r}", file=sys.stderr)
        return 3
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "metrics.csv"), bench.metrics_csv([res.metrics]))
    _write(os.path.join(args.out, "history.txt"), res.history.to_text())
    _write(os.path.join(args.out, "trace.txt"), res.trace.to_text())
    m = res.metrics
    print(
        f"{cfg.protocol}: {m.ops_ok} ops ok, {m.ops_failed} failed, "
        f"throughput {m.throughput:.1f} ops/s, uvl mean {m.uvl_mean:.0f} us, "
        f"availability {m.availability:.4f}"
    )
    return 0


def cmd_check(args) -> int:
    try:
        with open(args.history) as f:
            h = History.from_text(f.read())
    except (HistoryError, OSError, ValueError) as e:
        print(f"parse error: {e}", file=sys.stderr)
        return 2
    try:
        verdict = _MODELS[args.model](h)
    except (BoundExceeded, AmbiguousReadFrom) as e:
        print(f"check error: {e}", file=sys.stderr)
        return 2
    if verdict.satisfied:
        print(f"{args.model}: satisfied")
        if verdict.witness:
            print(f"witness: {verdict.witness}")
        return 0
    print(f"{args.model}: violated")
    print(f"violation: {verdict.violation}")
    return 1


def cmd_sweep(args) -> int:
    try:
        cfg = _load(args.config)
        if args.axis not in bench.SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {args.axis!r}")
        values = [v for v in args.values.split(",") if v]
        if not values:
            raise ConfigError("empty sweep value list")
        protocols = [p for p in args.protocols.split(",") if p]
        rows = bench.sweep(cfg, args.axis, values, protocols)
    except (ConfigError, ValueError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (AssertionError, CheckerError, RuntimeError) as e:
        print(f"internal invariant violation: {e!r}", file=sys.stderr)
        return 3
    os.makedirs(args.out, exist_ok=True)
    table = bench.metrics_csv(rows, axis=args.axis)
    _write(os.path.join(args.out, "sweep.csv"), table)
    for proto, value, res in rows:
        point = os.path.join(args.out, f"point_{proto}_{value.replace(':', '-')}")
        os.makedirs(point, exist_ok=True)
        _write(os.path.join(point, "history.txt"), res.history.to_text())
        _write(os.path.join(point, "trace.txt"), res.trace.to_text())
    sys.stdout.write(table)
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="consistency-lab",
        description="Simulate geo-replicated KV protocols and check consistency.",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out", default="out")
    p_run.set_defaults(fn=cmd_run)

    p_check = sub.add_parser("check", help="check a recorded history")
    p_check.add_argument("history")
    p_check.add_argument("--model", choices=sorted(_MODELS), required=True)
    p_check.set_defaults(fn=cmd_check)

    p_sweep = sub.add_parser("sweep", help="sweep one axis across protocols")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--axis", required=True)
    p_sweep.add_argument("--values", required=True)
    p_sweep.add_argument("--out", default="out")
    p_sweep.add_argument("--protocols", default="cops,gentlerain,eventual")
    p_sweep.set_defaults(fn=cmd_sweep)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
