"""Best-first (A*-style) synthesis of a small unitary into VUG + CX circuits.

A node is a circuit template: an initial layer of single-qubit VUGs followed
by ``k`` repetitions of ``CX(p, q); VUG(p); VUG(q)``. Each node's VUG angles
are fitted numerically to the target, and nodes are expanded in ascending
``f = cnot_count + weight * dist``.
"""
from __future__ import annotations

import heapq
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from . import linalg
from .ir import Circuit, Gate, gate_matrix, u3

log = logging.getLogger(__name__)

MAX_SYNTH_QUBITS = 4


@dataclass(frozen=True)
class SynthConfig:
    success_threshold: float = 1e-8
    heuristic_weight: float = 10.0
    max_expansions: int = 5000
    optimizer_restarts: int = 4
    coupling: tuple[tuple[int, int], ...] | None = None
    max_cnots: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.success_threshold <= 0 or self.heuristic_weight <= 0:
            raise ValueError("threshold and weight must be positive")
        if self.optimizer_restarts < 1:
            raise ValueError("need at least one optimizer start")


@dataclass
class SynthNode:
    template: Circuit
    params: np.ndarray
    achieved_dist: float
    g: int
    f: float


@dataclass
class SynthResult:
    circuit: Circuit
    final_dist: float
    expansions: int
    cnot_count: int
    success: bool
    trace: list[dict] = field(default_factory=list, repr=False)


# -- instantiation -----------------------------------------------------------

def _du3(theta: float, phi: float, lam: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    el, ep, epl = np.exp(1j * lam), np.exp(1j * phi), np.exp(1j * (phi + lam))
    dt = 0.5 * np.array([[-s, -el * c], [ep * c, -epl * s]])
    dp = np.array([[0, 0], [1j * ep * s, 1j * epl * c]])
    dl = np.array([[0, -1j * el * s], [0, 1j * epl * c]])
    return dt, dp, dl


def _reduce(m: np.ndarray, q: int, n: int) -> np.ndarray:
    """Partial trace of ``m`` onto qubit ``q``: ``tr(m . embed(g, q)) = sum(red.T * g)``."""
    hi, lo = 2 ** (n - 1 - q), 2**q
    return np.einsum("aibajb->ij", m.reshape(hi, 2, lo, hi, 2, lo))


@lru_cache(maxsize=None)
def _bit_pairs(q: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(2**n)
    i0 = idx[(idx >> q) & 1 == 0]
    return i0, i0 | (1 << q)


def _embed1(g: np.ndarray, q: int, n: int) -> np.ndarray:
    i0, i1 = _bit_pairs(q, n)
    out = np.zeros((2**n, 2**n), dtype=complex)
    out[i0, i0] = g[0, 0]
    out[i0, i1] = g[0, 1]
    out[i1, i0] = g[1, 0]
    out[i1, i1] = g[1, 1]
    return out


class _Objective:
    """``1 - |tr(T^dag U(x))|^2 / d^2`` and its gradient for a VUG/CX template."""

    def __init__(self, template: Circuit, target: np.ndarray):
        self.n = template.n_qubits
        self.d = 2**self.n
        self.gates = template.gates
        self.target_h = target.conj().T
        self.fixed = {}
        for i, g in enumerate(self.gates):
            if g.kind != "VUG":
                self.fixed[i] = linalg.embed(gate_matrix(g.kind, g.params, len(g.qubits)), g.qubits, self.n)
        self.vug_slots = [i for i, g in enumerate(self.gates) if g.kind == "VUG"]

    def unitary(self, x: np.ndarray) -> np.ndarray:
        u = np.eye(self.d, dtype=complex)
        k = 0
        for i, g in enumerate(self.gates):
            if g.kind == "VUG":
                u = _embed1(u3(*x[3 * k:3 * k + 3]), g.qubits[0], self.n) @ u
                k += 1
            else:
                u = self.fixed[i] @ u
        return u

    def dist(self, x: np.ndarray) -> float:
        return linalg.dist(np.conj(self.target_h.T), self.unitary(x))

    def __call__(self, x: np.ndarray):
        n, d = self.n, self.d
        mats = []
        k = 0
        for i, g in enumerate(self.gates):
            if g.kind == "VUG":
                mats.append(_embed1(u3(*x[3 * k:3 * k + 3]), g.qubits[0], n))
                k += 1
            else:
                mats.append(self.fixed[i])
        prefix = [np.eye(d, dtype=complex)]
        for m in mats:
            prefix.append(m @ prefix[-1])
        z = np.trace(self.target_h @ prefix[-1])
        grad = np.zeros_like(x)
        back = self.target_h
        k = len(self.vug_slots)
        for i in range(len(mats) - 1, -1, -1):
            g = self.gates[i]
            if g.kind == "VUG":
                k -= 1
                red = _reduce(prefix[i] @ back, g.qubits[0], n)
                for j, dg in enumerate(_du3(*x[3 * k:3 * k + 3])):
                    dz = np.sum(red.T * dg)
                    grad[3 * k + j] = -2 * np.real(np.conj(z) * dz) / d**2
            back = back @ mats[i]
        return 1 - abs(z) ** 2 / d**2, grad


def instantiate(template: Circuit, target: np.ndarray, cfg: SynthConfig = SynthConfig(),
                warm_start=None, rng: np.random.Generator | None = None) -> tuple[np.ndarray, float]:
    """Fit VUG angles of ``template`` to ``target``; returns ``(params, dist)``."""
    obj = _Objective(template, np.asarray(target, dtype=complex))
    n_params = 3 * len(obj.vug_slots)
    if n_params == 0:
        raise ValueError("template has no VUGs to instantiate")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    x0 = np.zeros(n_params)
    if warm_start is not None:
        w = np.asarray(warm_start, dtype=float)[:n_params]
        x0[:len(w)] = w
    best_x, best_d = x0, obj.dist(x0)
    starts = [x0] + [rng.uniform(-math.pi, math.pi, n_params) for _ in range(cfg.optimizer_restarts - 1)]
    for start in starts:
        if best_d <= cfg.success_threshold:
            break
        res = minimize(obj, start, jac=True, method="L-BFGS-B",
                       options={"maxiter": 2000, "ftol": 1e-16, "gtol": 1e-12})
        dd = obj.dist(res.x)
        if dd < best_d:
            best_x, best_d = res.x, dd
    return np.asarray(best_x), float(best_d)


# -- search ------------------------------------------------------------------

def root_template(n: int) -> Circuit:
    return Circuit(n, [Gate("VUG", (q,), (0.0, 0.0, 0.0)) for q in range(n)])


def coupling_pairs(n: int, cfg: SynthConfig) -> list[tuple[int, int]]:
    """Directed CX placements: both orientations of every allowed pair."""
    pairs = cfg.coupling if cfg.coupling is not None else list(itertools.combinations(range(n), 2))
    out = []
    for p, q in pairs:
        out.extend([(p, q), (q, p)])
    return out


def _bake(template: Circuit, params: np.ndarray) -> Circuit:
    gates, k = [], 0
    for g in template.gates:
        if g.kind == "VUG":
            gates.append(Gate("VUG", g.qubits, tuple(params[3 * k:3 * k + 3])))
            k += 1
        else:
            gates.append(g)
    return Circuit(template.n_qubits, gates)


def expand_node(node: SynthNode, cfg: SynthConfig, target: np.ndarray | None = None,
                rng: np.random.Generator | None = None) -> list[SynthNode]:
    """One successor per directed coupling pair: append ``CX; VUG; VUG``.

    With a ``target``, successors are instantiated (warm-started from the
    parent angles) and scored; without one they carry the parent's distance.
    """
    n = node.template.n_qubits
    out = []
    for p, q in coupling_pairs(n, cfg):
        gates = node.template.gates + (Gate("CX", (p, q)), Gate("VUG", (p,), (0, 0, 0)), Gate("VUG", (q,), (0, 0, 0)))
        tmpl = Circuit(n, gates)
        warm = np.concatenate([node.params, np.zeros(6)])
        if target is not None:
            params, d = instantiate(tmpl, target, cfg, warm_start=warm, rng=rng)
        else:
            params, d = warm, node.achieved_dist
        g = node.g + 1
        out.append(SynthNode(tmpl, params, d, g, g + cfg.heuristic_weight * d))
    return out


def synthesize(target: np.ndarray, cfg: SynthConfig = SynthConfig(), trace_path=None) -> SynthResult:
    target = linalg.as_unitary(target)
    n = linalg.n_qubits_of(target)
    if not 1 <= n <= MAX_SYNTH_QUBITS:
        raise ValueError(f"synthesis supports 1..{MAX_SYNTH_QUBITS} qubits, got {n}")
    rng = np.random.default_rng(cfg.seed)
    tmpl = root_template(n)
    params, d = instantiate(tmpl, target, cfg, rng=rng)
    root = SynthNode(tmpl, params, d, 0, cfg.heuristic_weight * d)
    counter = itertools.count()
    heap = [(root.f, next(counter), root)]
    best = root
    expansions = 0
    trace = []
    success = False
    while heap:
        f, _, node = heapq.heappop(heap)
        trace.append({"f": node.f, "g": node.g, "dist": node.achieved_dist,
                      "gate_count": len(node.template), "open_min_f": heap[0][0] if heap else None})
        if node.achieved_dist < best.achieved_dist:
            best = node
        if node.achieved_dist <= cfg.success_threshold:
            best, success = node, True
            break
        if expansions >= cfg.max_expansions:
            break
        if cfg.max_cnots is not None and node.g >= cfg.max_cnots:
            continue
        expansions += 1
        for child in expand_node(node, cfg, target, rng):
            if child.achieved_dist < best.achieved_dist:
                best = child
            heapq.heappush(heap, (child.f, next(counter), child))
    if trace_path is not None:
        with open(trace_path, "w") as fh:
            for rec in trace:
                fh.write(json.dumps(rec) + "\n")
    if not success:
        log.info("synthesis budget exhausted after %d expansions (best dist %.3e)", expansions, best.achieved_dist)
    circuit = _bake(best.template, best.params)
    return SynthResult(circuit, best.achieved_dist, expansions, best.g, success, trace)


def transcribe(c: Circuit) -> Circuit:
    """Exact gate-by-gate rewrite of ``c`` into VUG + CX form.

    Runs of single-qubit gates collapse into one VUG; ``CZ(a, b)`` becomes
    ``H_b CX(a, b) H_b`` with the Hadamards absorbed into neighbouring VUGs.
    """
    from .ir import u3_params

    h = gate_matrix("H")
    pending: dict[int, np.ndarray] = {}
    out: list[Gate] = []

    def push(q, m):
        pending[q] = m @ pending.get(q, np.eye(2, dtype=complex))

    def flush(q):
        m = pending.pop(q, None)
        if m is not None and linalg.dist(m, np.eye(2)) > 1e-14:
            out.append(Gate("VUG", (q,), u3_params(m)))

    for g in c.gates:
        if len(g.qubits) == 1:
            push(g.qubits[0], g.matrix())
        elif g.kind in ("CX", "CZ"):
            a, b = g.qubits
            if g.kind == "CZ":
                push(b, h)
            flush(a)
            flush(b)
            out.append(Gate("CX", (a, b)))
            if g.kind == "CZ":
                push(b, h)
        else:
            raise ValueError(f"cannot transcribe {g.kind} into VUG/CX form")
    for q in sorted(pending):
        flush(q)
    return Circuit(c.n_qubits, out)
