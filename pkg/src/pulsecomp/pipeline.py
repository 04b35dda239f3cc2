"""End-to-end compilation: ZX -> partition -> synthesis -> regroup -> QOC -> schedule.

Three modes share the front end where it applies:

``grouped``
    synthesized blocks are regrouped into medium-size unitaries before QOC.
``ungrouped``
    QOC runs on every synthesized gate (VUG or CX) individually.
``gate_based``
    reference arm: each input gate gets a fixed duration from the device
    config; no ZX, synthesis or GRAPE.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import linalg, zx
from .ir import Circuit, Gate, parse_qasm
from .partition import Block, PartitionConfig, partition
from .pulselib import PulseLibrary, canonical_key
from .qoc import DeviceConfig, GrapeConfig, Infeasible, PulseSchedule, min_duration, simulate
from .regroup import GroupedUnitary, per_gate_groups, regroup, schedule
from .synth import MAX_SYNTH_QUBITS, SynthConfig, synthesize, transcribe

log = logging.getLogger(__name__)

MODES = ("grouped", "ungrouped", "gate_based")
TIMING_FIELDS = ("wall_time_s", "per_stage")


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    partition: PartitionConfig = PartitionConfig()
    synth: SynthConfig = SynthConfig(max_expansions=12, optimizer_restarts=3)
    regroup_limit: int = 3
    grape: GrapeConfig = GrapeConfig()
    device: DeviceConfig = DeviceConfig()
    model_path: str | None = None
    library_path: str | None = None
    mode: str = "grouped"
    parallel_workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 2 <= self.regroup_limit <= 4:
            raise ValueError("regroup_limit must lie in [2, 4]")
        if self.parallel_workers < 1:
            raise ValueError("parallel_workers must be >= 1")
        if self.model_path is not None:
            # a model file takes precedence over the inline device
            object.__setattr__(self, "device", DeviceConfig.load(self.model_path))


@dataclass
class CompilationReport:
    benchmark: str
    mode: str
    n_qubits: int
    total_latency_ns: float
    esp: float
    wall_time_s: float
    cache_hits: int
    cache_misses: int
    per_stage: dict[str, float]
    per_block: list[dict]
    depth_in: int = 0
    depth_zx: int = 0
    gate_count: int = 0
    pulses: list[dict] = field(default_factory=list)
    artifacts: dict = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "artifacts"}

    @classmethod
    def from_dict(cls, data: dict) -> "CompilationReport":
        return cls(**{k: v for k, v in data.items() if k != "artifacts"})

    def without_timing(self) -> dict:
        d = self.to_dict()
        for k in TIMING_FIELDS:
            d.pop(k)
        return d


def esp(dists) -> float:
    """Estimated success probability: product of per-pulse ``1 - dist``."""
    out = 1.0
    for d in dists:
        if not 0.0 <= d <= 1.0:
            raise ValueError(f"pulse distance {d} outside [0, 1]")
        out *= 1.0 - d
    return out


# -- workers -----------------------------------------------------------------

def _pmap(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _derived_seed(seed: int, u: np.ndarray) -> int:
    return (seed * 1_000_003 + int(canonical_key(u)[:12], 16)) % (2**32)


@dataclass
class BlockSynthesis:
    circuit: Circuit
    dist: float
    method: str
    cnots_in: int
    expansions: int = 0


def synthesize_block(args) -> BlockSynthesis:
    sub, cfg, seed = args
    cx_in = sub.cx_count()
    if sub.n_qubits > MAX_SYNTH_QUBITS:
        log.warning("block on %d qubits exceeds the synthesis cap; passing it on as a raw unitary", sub.n_qubits)
        gate = Gate.raw(sub.unitary(), tuple(range(sub.n_qubits)))
        return BlockSynthesis(Circuit(sub.n_qubits, [gate]), 0.0, "raw", cx_in)
    fallback = transcribe(sub)
    target = sub.unitary()
    if cx_in == 0:
        return BlockSynthesis(fallback, linalg.dist(target, fallback.unitary()), "transcribed", cx_in)
    res = synthesize(target, replace(cfg, max_cnots=fallback.cx_count() - 1, seed=seed))
    if res.success and res.circuit.depth() <= fallback.depth():
        return BlockSynthesis(res.circuit, res.final_dist, "search", cx_in, res.expansions)
    return BlockSynthesis(fallback, linalg.dist(target, fallback.unitary()), "transcribed", cx_in, res.expansions)


def _qoc_task(args):
    matrix, device, grape, key = args
    n = linalg.n_qubits_of(matrix)
    model = device.model(n)
    try:
        return min_duration(model, matrix, grape, key), True
    except Infeasible as exc:
        return exc.best, False


# -- driver ------------------------------------------------------------------

@dataclass
class _Pulse:
    block: int
    qubits: tuple[int, ...]
    matrix: np.ndarray
    gates: tuple[Gate, ...]
    key: str = ""
    schedule: PulseSchedule | None = None


def _split(p: _Pulse) -> list[_Pulse]:
    half = len(p.gates) // 2
    out = []
    for part in (p.gates[:half], p.gates[half:]):
        qs = tuple(sorted({q for g in part for q in g.qubits}))
        local = {q: j for j, q in enumerate(qs)}
        u = Circuit(len(qs), [g.remap(local) for g in part]).unitary()
        out.append(_Pulse(p.block, qs, u, part))
    return out


def _resolve_pulses(pulses: list[_Pulse], cfg: PipelineConfig, lib: PulseLibrary):
    """Fill in schedules, reusing library pulses; returns (pulses, hits, misses)."""
    hits = misses = 0
    grape = replace(cfg.grape, rng_seed=cfg.seed)
    while True:
        for p in pulses:
            p.key = p.key or canonical_key(p.matrix)
        todo: dict[str, _Pulse] = {}
        for p in pulses:
            if p.schedule is not None:
                continue
            cached = lib.lookup(p.matrix)
            if cached is not None:
                p.schedule = cached
            elif p.key not in todo:
                todo[p.key] = p
        keys = list(todo)
        results = _pmap(_qoc_task, [(todo[k].matrix, cfg.device, grape, k) for k in keys], cfg.parallel_workers)
        misses += len(keys)
        failed = set()
        for k, (sched, ok) in zip(keys, results):
            if ok:
                lib.insert(todo[k].matrix, sched)
            elif len(todo[k].gates) > 1:
                failed.add(k)
            else:
                log.warning("QOC below threshold for a single gate on %s (F=%.6f); keeping best pulse",
                            todo[k].qubits, sched.fidelity)
            todo[k].schedule = sched
        resolved = {k: sched for k, (sched, ok) in zip(keys, results)}
        nxt: list[_Pulse] = []
        for p in pulses:
            if p.key in failed:
                log.warning("QOC infeasible for a %d-gate group on %s; splitting it", len(p.gates), p.qubits)
                nxt.extend(_split(p))
                continue
            if p.schedule is None:
                p.schedule = resolved[p.key]
            nxt.append(p)
        pulses = nxt
        if not failed:
            break
    hits = len(pulses) - misses
    return pulses, max(hits, 0), misses


def _stage(name, timings, fn, *args):
    t0 = time.perf_counter()
    try:
        return fn(*args)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


def compile_circuit(c: Circuit, cfg: PipelineConfig = PipelineConfig(), name: str = "",
                    library: PulseLibrary | None = None) -> CompilationReport:
    t_start = time.perf_counter()
    timings: dict[str, float] = {}
    if cfg.mode == "gate_based":
        return _gate_based(c, cfg, name, t_start)
    lib = library if library is not None else PulseLibrary(cfg.library_path, cfg.grape.fidelity_threshold)

    optimized = _stage("zx", timings, zx.optimize, c)
    blocks: list[Block] = _stage("partition", timings, partition, optimized, cfg.partition)
    jobs = [(b.sub, cfg.synth, _derived_seed(cfg.seed, b.unitary())) for b in blocks]
    synths = _stage("synthesis", timings, _pmap, synthesize_block, jobs, cfg.parallel_workers)

    def build_pulses():
        out = []
        for bi, (b, s) in enumerate(zip(blocks, synths)):
            groups = regroup(s.circuit, cfg.regroup_limit) if cfg.mode == "grouped" else per_gate_groups(s.circuit)
            for grp in groups:
                qs = tuple(b.qubits[q] for q in grp.qubits)
                gates = tuple(s.circuit.gates[i].remap(b.qubits) for i in grp.source_gates)
                out.append(_Pulse(bi, qs, grp.matrix, gates))
        return out

    pulses = _stage("regroup", timings, build_pulses)
    pulses, hits, misses = _stage("qoc", timings, _resolve_pulses, pulses, cfg, lib)

    def do_schedule():
        groups = [GroupedUnitary(p.qubits, p.matrix, ()) for p in pulses]
        return schedule(groups, [p.schedule.duration for p in pulses])

    scheduled, total = _stage("schedule", timings, do_schedule)

    per_block = []
    for bi, (b, s) in enumerate(zip(blocks, synths)):
        mine = [p for p in pulses if p.block == bi]
        per_block.append({
            "qubits": list(b.qubits),
            "synth_dist": s.dist,
            "synth_method": s.method,
            "cnots_in": s.cnots_in,
            "cnots_out": s.circuit.cx_count(),
            "depth_in": b.sub.depth(),
            "depth_out": s.circuit.depth(),
            "n_pulses": len(mine),
            "pulse_duration_ns": float(sum(p.schedule.duration for p in mine)),
            "fidelity": float(np.prod([p.schedule.fidelity for p in mine])),
        })
    pulse_rows = [{
        "qubits": list(p.qubits), "start_ns": sp.start, "duration_ns": sp.duration,
        "key": p.key, "fidelity": p.schedule.fidelity,
    } for p, sp in zip(pulses, scheduled)]
    return CompilationReport(
        benchmark=name, mode=cfg.mode, n_qubits=c.n_qubits, total_latency_ns=float(total),
        esp=esp([1.0 - p.schedule.fidelity for p in pulses]),
        wall_time_s=time.perf_counter() - t_start, cache_hits=hits, cache_misses=misses,
        per_stage=timings, per_block=per_block, depth_in=c.depth(), depth_zx=optimized.depth(),
        gate_count=len(c), pulses=pulse_rows,
        artifacts={"pulses": pulses, "device": cfg.device, "optimized": optimized, "blocks": blocks,
                   "synthesized": synths},
    )


def _gate_based(c: Circuit, cfg: PipelineConfig, name: str, t_start: float) -> CompilationReport:
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    dev = cfg.device
    groups = per_gate_groups(c)
    durations = [dev.gate_duration_2q_ns if len(g.qubits) > 1 else dev.gate_duration_1q_ns for g in c.gates]
    scheduled, total = schedule(groups, durations)
    timings["schedule"] = time.perf_counter() - t0
    rows = [{"qubits": list(sp.group.qubits), "start_ns": sp.start, "duration_ns": sp.duration,
             "key": "", "fidelity": 1.0} for sp in scheduled]
    return CompilationReport(
        benchmark=name, mode=cfg.mode, n_qubits=c.n_qubits, total_latency_ns=float(total), esp=1.0,
        wall_time_s=time.perf_counter() - t_start, cache_hits=0, cache_misses=0, per_stage=timings,
        per_block=[], depth_in=c.depth(), depth_zx=c.depth(), gate_count=len(c), pulses=rows,
    )


def compile(qasm_path, cfg: PipelineConfig = PipelineConfig(), library: PulseLibrary | None = None) -> CompilationReport:
    path = Path(qasm_path)
    try:
        c = parse_qasm(path.read_text())
    except Exception as exc:
        raise StageError("parse", exc) from exc
    return compile_circuit(c, cfg, path.stem, library)


def pulse_composite(report: CompilationReport, n_qubits: int) -> np.ndarray:
    """Unitary actually produced by the scheduled pulses, composed in dependency order."""
    u = np.eye(2**n_qubits, dtype=complex)
    device: DeviceConfig = report.artifacts["device"]
    for p in report.artifacts["pulses"]:
        model = device.model(len(p.qubits))
        u = linalg.apply_on(u, simulate(model, p.schedule.amps), list(p.qubits), n_qubits)
    return u


# -- emission ----------------------------------------------------------------

CSV_COLUMNS = ("benchmark", "mode", "latency_ns", "esp", "wall_s", "hits", "misses")


def report_json(reports) -> str:
    single = isinstance(reports, CompilationReport)
    data = reports.to_dict() if single else [r.to_dict() for r in reports]
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def reports_from_json(text: str):
    data = json.loads(text)
    if isinstance(data, dict):
        return CompilationReport.from_dict(data)
    return [CompilationReport.from_dict(d) for d in data]


def report_csv(reports) -> str:
    if isinstance(reports, CompilationReport):
        reports = [reports]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([r.benchmark, r.mode, repr(r.total_latency_ns), repr(r.esp), f"{r.wall_time_s:.6f}",
                    r.cache_hits, r.cache_misses])
    return buf.getvalue()


def report_emit(reports, fmt: str, path) -> Path:
    if fmt not in ("json", "csv"):
        raise ValueError(f"unknown report format {fmt!r}")
    text = report_json(reports) if fmt == "json" else report_csv(reports)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
