"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import ConfigError
from ..stream import make_synthetic_dataset
from .config import SWEEP_AXES, load_config
from .report import analyze_trace, emit_report, ensure_writable, load_records, read_trace, write_sweep
from .runner import run_seeds, run_sweep


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sscl", description="Semi-supervised continual learning experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="train every configured seed and write a report")
    run.add_argument("--config", required=True, help="experiment JSON")
    run.add_argument("--seed", type=int, action="append", help="override the config's seeds (repeatable)")
    run.add_argument("--out", help="output directory (default: the config's out_dir)")
    run.add_argument("--no-trace", action="store_true", help="skip trace.jsonl")

    sweep = sub.add_parser("sweep", help="ablate one hyperparameter")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep.add_argument("--values", required=True, help="comma-separated; architectures as 64x16")
    sweep.add_argument("--out")

    analyze = sub.add_parser("analyze", help="cosine and fitness-loss diagnostics from a trace")
    analyze.add_argument("--trace", required=True)

    gen = sub.add_parser("gen-data", help="write a synthetic dataset container")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default="synthetic.sscl")
    gen.add_argument("--classes", type=int, default=10)
    gen.add_argument("--dim", type=int, default=20)
    gen.add_argument("--per-class", type=int, default=250)
    gen.add_argument("--test-per-class", type=int, default=50)
    gen.add_argument("--radius", type=float, default=4.0)

    report = sub.add_parser("report", help="rebuild report files from records.json")
    report.add_argument("--in", dest="in_dir", required=True)
    report.add_argument("--out", help="defaults to the input directory")
    return p


def _split_values(text: str, axis: str) -> list:
    if axis == "arch":
        return [v for v in text.replace(";", ",").split(",") if v]
    try:
        return [float(v) if axis != "batch" else int(v) for v in text.split(",") if v]
    except ValueError:
        raise ConfigError(f"bad value list {text!r} for axis {axis}") from None


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = ensure_writable(args.out or cfg.out_dir)
    records = run_seeds(cfg, args.seed, keep_trace=not args.no_trace)
    emit_report(records, out)
    for r in records:
        m = r.metrics
        print(f"seed {r.seed}: ACC={m['acc']:.4f} BWT={m['bwt']:.4f} FWT={m['fwt']:.4f}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out = ensure_writable(args.out or cfg.out_dir)
    values = _split_values(args.values, args.axis)
    rep = run_sweep(cfg, args.axis, values)
    path = write_sweep(rep, out)
    for key, agg in rep.aggregate.items():
        mean = "n/a" if agg["acc_mean"] is None else f"{agg['acc_mean']:.4f}"
        print(f"{args.axis}={key}: runs={agg['runs']} failed={agg['failed']} ACC={mean}")
    print(f"wrote {path}")
    return 0


def _cmd_analyze(args) -> int:
    print(json.dumps(analyze_trace(read_trace(args.trace)), indent=2, sort_keys=True))
    return 0


def _cmd_gen_data(args) -> int:
    data = make_synthetic_dataset(args.classes, args.dim, args.per_class, args.seed, radius=args.radius,
                                  test_per_class=args.test_per_class)
    out = Path(args.out)
    data.save(out, {"generator": "gaussian-clusters", "seed": args.seed, "radius": args.radius})
    print(f"wrote {out}")
    return 0


def _cmd_report(args) -> int:
    records = load_records(args.in_dir)
    emit_report(records, args.out or args.in_dir)
    return 0


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "analyze": _cmd_analyze, "gen-data": _cmd_gen_data,
            "report": _cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"sscl: config error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"sscl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
