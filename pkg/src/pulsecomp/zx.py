"""ZX-diagram conversion, rewriting and circuit extraction.

Diagrams keep a qubit-line structure: every non-boundary spider sits on one
qubit wire and has exactly two *line* edges (to neighbours on the same
qubit), plus any number of *legs* to spiders on other qubits. Legs are always
either plain Z--X (a CNOT) or hadamard Z--Z (a CZ). The rewrite set below
preserves that shape, which is what makes extraction a simple frontier walk.

Phases are stored in units of pi, as ``Fraction`` when exact (Clifford+T
sources) and ``float`` otherwise, reduced into ``[0, 2)``.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .ir import Circuit, CircuitError, Gate, WHITELIST

PLAIN = "plain"
HADAMARD = "hadamard"

Z = "Z"
X = "X"
BOUNDARY = "Boundary"


class ExtractionError(RuntimeError):
    pass


def _norm_phase(p):
    if isinstance(p, Fraction):
        return p % 2
    p = float(p) % 2.0
    # snap near-multiples of 1/4 back to exact fractions
    q = round(p * 4)
    if abs(p * 4 - q) < 1e-12:
        return Fraction(q % 8, 4)
    return p


def _is_zero(p) -> bool:
    if isinstance(p, Fraction):
        return p == 0
    return min(p, 2.0 - p) < 1e-12


@dataclass
class Spider:
    id: int
    color: str
    phase: Fraction | float = Fraction(0)
    qubit: int = 0
    row: float = 0.0

    @property
    def radians(self) -> float:
        return float(self.phase) * math.pi


@dataclass
class Edge:
    u: int
    v: int
    kind: str = PLAIN

    def other(self, s: int) -> int:
        return self.v if self.u == s else self.u


@dataclass
class ZXDiagram:
    n_qubits: int
    spiders: dict[int, Spider] = field(default_factory=dict)
    edges: dict[int, Edge] = field(default_factory=dict)
    inputs: list[int] = field(default_factory=list)
    outputs: list[int] = field(default_factory=list)
    _adj: dict[int, set[int]] = field(default_factory=dict, repr=False)
    _next_spider: int = 0
    _next_edge: int = 0

    def add_spider(self, color: str, phase=Fraction(0), qubit: int = 0, row: float = 0.0) -> int:
        sid = self._next_spider
        self._next_spider += 1
        self.spiders[sid] = Spider(sid, color, _norm_phase(phase), qubit, row)
        self._adj[sid] = set()
        return sid

    def add_edge(self, u: int, v: int, kind: str = PLAIN) -> int:
        eid = self._next_edge
        self._next_edge += 1
        self.edges[eid] = Edge(u, v, kind)
        self._adj[u].add(eid)
        self._adj[v].add(eid)
        return eid

    def remove_edge(self, eid: int) -> None:
        e = self.edges.pop(eid)
        self._adj[e.u].discard(eid)
        self._adj[e.v].discard(eid)

    def remove_spider(self, sid: int) -> None:
        for eid in list(self._adj[sid]):
            self.remove_edge(eid)
        del self._adj[sid]
        del self.spiders[sid]

    def incident(self, sid: int) -> list[int]:
        return sorted(self._adj[sid])

    def degree(self, sid: int) -> int:
        return len(self._adj[sid])

    def is_line_edge(self, eid: int) -> bool:
        e = self.edges[eid]
        return self.spiders[e.u].qubit == self.spiders[e.v].qubit

    def line_edges(self, sid: int) -> list[int]:
        return [e for e in self.incident(sid) if self.is_line_edge(e)]

    def legs(self, sid: int) -> list[int]:
        return [e for e in self.incident(sid) if not self.is_line_edge(e)]

    def copy(self) -> "ZXDiagram":
        return copy.deepcopy(self)

    def signature(self) -> tuple:
        """Structural fingerprint used for fixpoint/equality checks."""
        sp = tuple(sorted((s.id, s.color, str(s.phase), s.qubit) for s in self.spiders.values()))
        ed = tuple(sorted((min(e.u, e.v), max(e.u, e.v), e.kind) for e in self.edges.values()))
        return sp, ed, tuple(self.inputs), tuple(self.outputs)

    def n_spiders(self, include_boundary: bool = False) -> int:
        return sum(1 for s in self.spiders.values() if include_boundary or s.color != BOUNDARY)

    def validate(self) -> None:
        for b in self.inputs + self.outputs:
            if self.degree(b) != 1:
                raise ValueError(f"boundary {b} has degree {self.degree(b)}")
        if len(self.inputs) != self.n_qubits or len(self.outputs) != self.n_qubits:
            raise ValueError("boundary count does not match qubit count")
        for e in self.edges.values():
            if e.u not in self.spiders or e.v not in self.spiders:
                raise ValueError("edge references a missing spider")
        for s in self.spiders.values():
            if s.color == BOUNDARY and not _is_zero(s.phase):
                raise ValueError("boundary spider carries a phase")

    def to_dot(self) -> str:
        lines = ["graph zx {", "  rankdir=LR;"]
        fill = {Z: "#ccffcc", X: "#ff8888", BOUNDARY: "#ffffff"}
        for s in sorted(self.spiders.values(), key=lambda s: s.id):
            label = "" if s.color == BOUNDARY or _is_zero(s.phase) else f"{s.phase}π"
            lines.append(f'  n{s.id} [label="{label}", color="{s.color}", phase="{s.phase}", '
                         f'qubit={s.qubit}, style=filled, fillcolor="{fill[s.color]}"];')
        for eid in sorted(self.edges):
            e = self.edges[eid]
            style = ', style=dashed, color="blue"' if e.kind == HADAMARD else ""
            lines.append(f"  n{e.u} -- n{e.v} [kind={e.kind}{style}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


# -- circuit -> diagram ------------------------------------------------------

_Z_PHASES = {"Z": Fraction(1), "S": Fraction(1, 2), "Sdg": Fraction(3, 2),
             "T": Fraction(1, 4), "Tdg": Fraction(7, 4)}
_X_PHASES = {"X": Fraction(1), "SX": Fraction(1, 2)}


def _spider_sequence(g: Gate):
    """Single-qubit gate -> list of ('Z'|'X'|'H', phase) in time order."""
    k = g.kind
    if k == "H":
        return [("H", None)]
    if k in _Z_PHASES:
        return [(Z, _Z_PHASES[k])]
    if k in _X_PHASES:
        return [(X, _X_PHASES[k])]
    if k == "Y":  # Y = i X Z
        return [(Z, Fraction(1)), (X, Fraction(1))]
    if k == "RZ":
        return [(Z, g.params[0] / math.pi)]
    if k == "RX":
        return [(X, g.params[0] / math.pi)]
    if k == "RY":  # RY(t) = RZ(pi/2) RX(t) RZ(-pi/2)
        return [(Z, Fraction(3, 2)), (X, g.params[0] / math.pi), (Z, Fraction(1, 2))]
    if k == "U3":  # RZ(phi) RY(theta) RZ(lam)
        theta, phi, lam = g.params
        return [(Z, lam / math.pi - 0.5), (X, theta / math.pi), (Z, phi / math.pi + 0.5)]
    raise CircuitError(f"gate kind {k} cannot be encoded as a ZX diagram")


def from_circuit(c: Circuit) -> ZXDiagram:
    d = ZXDiagram(c.n_qubits)
    last = []
    pending = []
    row = [0.0] * c.n_qubits
    for q in range(c.n_qubits):
        b = d.add_spider(BOUNDARY, qubit=q, row=0)
        d.inputs.append(b)
        last.append(b)
        pending.append(PLAIN)

    def place(color, phase, q):
        row[q] += 1
        s = d.add_spider(color, phase, q, row[q])
        d.add_edge(last[q], s, pending[q])
        last[q] = s
        pending[q] = PLAIN
        return s

    for g in c.gates:
        if g.kind not in WHITELIST:
            raise CircuitError(f"gate kind {g.kind} cannot be encoded as a ZX diagram")
        if g.kind == "CX":
            ctl, tgt = g.qubits
            r = max(row[ctl], row[tgt])
            row[ctl] = row[tgt] = r
            a = place(Z, 0, ctl)
            b = place(X, 0, tgt)
            d.add_edge(a, b, PLAIN)
        elif g.kind == "CZ":
            p, q = g.qubits
            r = max(row[p], row[q])
            row[p] = row[q] = r
            a = place(Z, 0, p)
            b = place(Z, 0, q)
            d.add_edge(a, b, HADAMARD)
        else:
            q = g.qubits[0]
            for color, phase in _spider_sequence(g):
                if color == "H":
                    if pending[q] == HADAMARD:
                        # keep consecutive H gates apart so the encoding is invertible
                        place(Z, 0, q)
                    pending[q] = HADAMARD
                else:
                    place(color, phase, q)
    for q in range(c.n_qubits):
        b = d.add_spider(BOUNDARY, qubit=q, row=row[q] + 1)
        d.add_edge(last[q], b, pending[q])
        d.outputs.append(b)
    return d


# -- rewrites ----------------------------------------------------------------

def _toggle(kind: str) -> str:
    return PLAIN if kind == HADAMARD else HADAMARD


def _cancel_parallel_legs(d: ZXDiagram, sid: int) -> bool:
    """Hopf / CZ-pair rule: two parallel legs between the same spiders cancel."""
    changed = False
    seen: dict[tuple[int, str], int] = {}
    for eid in d.legs(sid):
        e = d.edges[eid]
        key = (e.other(sid), e.kind)
        if key in seen:
            d.remove_edge(seen.pop(key))
            d.remove_edge(eid)
            changed = True
        else:
            seen[key] = eid
    return changed


def fuse_spiders(d: ZXDiagram) -> bool:
    """Merge same-colour spiders joined by a plain line edge; phases add."""
    changed = False
    for sid in sorted(d.spiders):
        if sid not in d.spiders:
            continue
        s = d.spiders[sid]
        if s.color == BOUNDARY:
            continue
        while True:
            target = None
            for eid in d.line_edges(sid):
                e = d.edges[eid]
                o = d.spiders[e.other(sid)]
                if e.kind == PLAIN and o.color == s.color:
                    target = (eid, o.id)
                    break
            if target is None:
                break
            eid, oid = target
            d.remove_edge(eid)
            s.phase = _norm_phase(s.phase + d.spiders[oid].phase)
            for other_eid in d.incident(oid):
                e = d.edges[other_eid]
                far = e.other(oid)
                kind = e.kind
                d.remove_edge(other_eid)
                d.add_edge(sid, far, kind)
            d.remove_spider(oid)
            _cancel_parallel_legs(d, sid)
            changed = True
    return changed


def _remove_degree2(d: ZXDiagram, want_hadamard_pair: bool) -> bool:
    changed = False
    for sid in sorted(d.spiders):
        s = d.spiders.get(sid)
        if s is None or s.color == BOUNDARY or d.degree(sid) != 2 or not _is_zero(s.phase):
            continue
        e1, e2 = (d.edges[e] for e in d.incident(sid))
        both_h = e1.kind == HADAMARD and e2.kind == HADAMARD
        if both_h != want_hadamard_pair:
            continue
        a, b = e1.other(sid), e2.other(sid)
        kind = PLAIN if (e1.kind == HADAMARD) == (e2.kind == HADAMARD) else HADAMARD
        d.remove_spider(sid)
        d.add_edge(a, b, kind)
        changed = True
    return changed


def remove_identities(d: ZXDiagram) -> bool:
    """Delete phase-0 degree-2 spiders (at most one hadamard edge among the two)."""
    return _remove_degree2(d, want_hadamard_pair=False)


def cancel_hadamard_pairs(d: ZXDiagram) -> bool:
    """Phase-0 degree-2 spider between two hadamard edges: H.H = I."""
    return _remove_degree2(d, want_hadamard_pair=True)


_LEGAL_LEGS = {(Z, X, PLAIN), (X, Z, PLAIN), (Z, Z, HADAMARD)}


def color_change(d: ZXDiagram) -> bool:
    """H-sandwich rule: a spider between two hadamard line edges flips colour.

    All incident edges toggle type; applied only when every resulting leg is
    still a CNOT or CZ leg so the diagram stays circuit-like.
    """
    changed = False
    for sid in sorted(d.spiders):
        s = d.spiders.get(sid)
        if s is None or s.color == BOUNDARY:
            continue
        lines = d.line_edges(sid)
        if len(lines) != 2 or any(d.edges[e].kind != HADAMARD for e in lines):
            continue
        new_color = X if s.color == Z else Z
        ok = all(
            (new_color, d.spiders[d.edges[e].other(sid)].color, _toggle(d.edges[e].kind)) in _LEGAL_LEGS
            for e in d.legs(sid)
        )
        if not ok:
            continue
        s.color = new_color
        for e in d.incident(sid):
            d.edges[e].kind = _toggle(d.edges[e].kind)
        changed = True
    return changed


RULES = (fuse_spiders, remove_identities, cancel_hadamard_pairs, color_change)


def simplify(d: ZXDiagram) -> ZXDiagram:
    """Apply the rule set to a fixpoint on a copy of ``d``."""
    work = d.copy()
    while True:
        changed = False
        for rule in RULES:
            changed |= rule(work)
        if not changed:
            return work


# -- diagram -> circuit ------------------------------------------------------

_Z_NAMES = {Fraction(1, 4): "T", Fraction(1, 2): "S", Fraction(1): "Z",
            Fraction(3, 2): "Sdg", Fraction(7, 4): "Tdg"}
_X_NAMES = {Fraction(1): "X", Fraction(1, 2): "SX"}


def _signed_radians(p) -> float:
    r = float(p) * math.pi
    return r - 2 * math.pi if r > math.pi else r


def _phase_gate(s: Spider) -> Gate | None:
    if _is_zero(s.phase):
        return None
    names = _Z_NAMES if s.color == Z else _X_NAMES
    if isinstance(s.phase, Fraction) and s.phase in names:
        return Gate(names[s.phase], (s.qubit,))
    kind = "RZ" if s.color == Z else "RX"
    return Gate(kind, (s.qubit,), (_signed_radians(s.phase),))


def extract(d: ZXDiagram) -> Circuit:
    """Walk a circuit-like diagram left to right and emit gates."""
    n = d.n_qubits
    gates: list[Gate] = []
    cur = list(d.inputs)
    came_from: list[int | None] = [None] * n
    consumed: set[int] = set()
    outputs = set(d.outputs)
    while any(cur[q] not in outputs for q in range(n)):
        progress = False
        for q in range(n):
            sid = cur[q]
            if sid in outputs:
                continue
            s = d.spiders[sid]
            pending = [e for e in d.legs(sid) if e not in consumed]
            for eid in pending:
                e = d.edges[eid]
                o = d.spiders[e.other(sid)]
                if cur[o.qubit] != o.id:
                    continue
                consumed.add(eid)
                progress = True
                if e.kind == PLAIN and s.color == Z and o.color == X:
                    gates.append(Gate("CX", (q, o.qubit)))
                elif e.kind == PLAIN and s.color == X and o.color == Z:
                    gates.append(Gate("CX", (o.qubit, q)))
                elif e.kind == HADAMARD and s.color == Z and o.color == Z:
                    gates.append(Gate("CZ", (min(q, o.qubit), max(q, o.qubit))))
                else:
                    raise ExtractionError(f"leg {s.color}-{o.color} ({e.kind}) is not circuit-like")
            if any(e not in consumed for e in d.legs(sid)):
                continue
            forward = [e for e in d.line_edges(sid) if e != came_from[q]]
            if len(forward) != 1:
                raise ExtractionError(f"spider {sid} on qubit {q} has {len(forward)} forward wires")
            eid = forward[0]
            e = d.edges[eid]
            nxt = d.spiders[e.other(sid)]
            if e.kind == HADAMARD:
                gates.append(Gate("H", (q,)))
            if nxt.color != BOUNDARY:
                pg = _phase_gate(nxt)
                if pg is not None:
                    gates.append(pg)
            cur[q] = nxt.id
            came_from[q] = eid
            progress = True
        if not progress:
            raise ExtractionError("no extractable frontier; diagram is not circuit-like")
    return Circuit(n, gates)


# -- single-qubit aggregation ------------------------------------------------

def _named_single(m: np.ndarray, q: int) -> Gate | None:
    """Cheapest whitelist gate equal to ``m`` up to phase (None for identity)."""
    from .ir import gate_matrix, u3_params
    from .linalg import dist

    if dist(m, np.eye(2)) < 1e-12:
        return None
    for kind in ("H", "X", "Z", "S", "Sdg", "T", "Tdg", "SX", "Y"):
        if dist(m, gate_matrix(kind)) < 1e-12:
            return Gate(kind, (q,))
    if abs(m[0, 1]) < 1e-12:
        return Gate("RZ", (q,), (float(np.angle(m[1, 1] / m[0, 0])),))
    theta, phi, lam = u3_params(m)
    return Gate("U3", (q,), (theta, phi, lam))


def aggregate_single_qubit(c: Circuit) -> Circuit:
    """Collapse each run of adjacent single-qubit gates on a wire into one gate."""
    pending: dict[int, list[Gate]] = {}
    out: list[Gate] = []

    def flush(q):
        run = pending.pop(q, [])
        if len(run) == 1:
            out.append(run[0])
        elif run:
            m = np.eye(2, dtype=complex)
            for g in run:
                m = g.matrix() @ m
            g = _named_single(m, q)
            if g is not None:
                out.append(g)

    for g in c.gates:
        if len(g.qubits) == 1:
            pending.setdefault(g.qubits[0], []).append(g)
        else:
            for q in g.qubits:
                flush(q)
            out.append(g)
    for q in sorted(pending):
        flush(q)
    return Circuit(c.n_qubits, out)


def optimize(c: Circuit) -> Circuit:
    """ZX depth reduction: encode, rewrite to fixpoint, extract, aggregate."""
    return aggregate_single_qubit(extract(simplify(from_circuit(c))))
