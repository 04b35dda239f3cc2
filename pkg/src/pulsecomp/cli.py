"""Command-line driver: ``pulsecomp compile`` and ``pulsecomp bench``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .partition import PartitionConfig
from .pipeline import MODES, PipelineConfig, StageError, compile, report_csv, report_emit, report_json
from .pulselib import LibraryError, PulseLibrary
from .qoc import DeviceConfig

log = logging.getLogger("pulsecomp")

BENCH_DIR = Path(__file__).parent / "benchmarks"


def _mode(text: str) -> str:
    mode = text.replace("-", "_")
    if mode not in MODES:
        raise argparse.ArgumentTypeError(f"mode must be one of grouped, ungrouped, gate-based (got {text!r})")
    return mode


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--partition-limit", type=int, default=3, metavar="K", help="max qubits per partition block")
    p.add_argument("--regroup-limit", type=int, default=3, metavar="K", help="max qubits per regrouped unitary")
    p.add_argument("--model", metavar="FILE", help="device description (TOML or JSON)")
    p.add_argument("--library", metavar="FILE", help="persistent pulse library (JSON lines)")
    p.add_argument("--workers", type=int, default=1, metavar="N", help="parallel synthesis/QOC workers")
    p.add_argument("--seed", type=int, default=0, metavar="S")
    p.add_argument("--synth-expansions", type=int, default=None, metavar="N",
                   help="best-first expansion budget per block")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pulsecomp", description="Compile OpenQASM 2 circuits to pulse schedules.")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile one circuit")
    c.add_argument("qasm", type=Path)
    c.add_argument("--mode", type=_mode, default="grouped", help="grouped | ungrouped | gate-based")
    c.add_argument("--out", type=Path, help="report path (default: stdout)")
    c.add_argument("--format", choices=("json", "csv"), default="json")
    _common(c)

    b = sub.add_parser("bench", help="compile a suite in every mode and emit the comparison CSV")
    b.add_argument("dir", type=Path, nargs="?", default=BENCH_DIR)
    b.add_argument("--modes", type=_mode, nargs="+", default=list(MODES))
    b.add_argument("--out", type=Path, help="CSV path (default: stdout)")
    b.add_argument("--format", choices=("json", "csv"), default="csv")
    _common(b)
    return ap


def config_from_args(args, mode: str) -> PipelineConfig:
    cfg = PipelineConfig(
        partition=PartitionConfig(qubit_limit=args.partition_limit),
        regroup_limit=args.regroup_limit,
        device=DeviceConfig.load(args.model) if args.model else DeviceConfig(),
        library_path=str(args.library) if args.library else None,
        mode=mode,
        parallel_workers=args.workers,
        seed=args.seed,
    )
    if args.synth_expansions is not None:
        cfg = replace(cfg, synth=replace(cfg.synth, max_expansions=args.synth_expansions))
    return cfg


def _emit(reports, fmt: str, out) -> None:
    if out is None:
        sys.stdout.write(report_json(reports) if fmt == "json" else report_csv(reports))
    else:
        report_emit(reports, fmt, out)
        log.info("wrote %s", out)


def cmd_compile(args) -> int:
    cfg = config_from_args(args, args.mode)
    with PulseLibrary(cfg.library_path, cfg.grape.fidelity_threshold) as lib:
        report = compile(args.qasm, cfg, lib)
    _emit(report, args.format, args.out)
    return 0


def cmd_bench(args) -> int:
    files = sorted(args.dir.glob("*.qasm"))
    if not files:
        print(f"error: no .qasm files in {args.dir}", file=sys.stderr)
        return 2
    reports = []
    for mode in args.modes:
        cfg = config_from_args(args, mode)
        with PulseLibrary(cfg.library_path, cfg.grape.fidelity_threshold) as lib:
            for f in files:
                r = compile(f, cfg, lib)
                log.info("%s %s: %.0f ns, esp %.5f, %.2f s", r.benchmark, mode, r.total_latency_ns, r.esp, r.wall_time_s)
                reports.append(r)
    _emit(reports, args.format, args.out)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "compile":
            return cmd_compile(args)
        return cmd_bench(args)
    except StageError as exc:
        print(f"error: stage {exc.stage} failed: {exc}", file=sys.stderr)
        return 1
    except (LibraryError, OSError, ValueError, TypeError) as exc:
        print(f"error: setup: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
