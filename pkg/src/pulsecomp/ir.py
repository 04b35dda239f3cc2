"""Circuit IR, OpenQASM 2.0 subset parser, and exact unitary/depth evaluation.

Qubit ordering is little-endian throughout: qubit 0 is the least significant
bit of a basis-state index, and for a multi-qubit gate the first listed qubit
is the least significant local axis. ``CX`` lists ``[control, target]``.

``U3(theta, phi, lam)`` is ``RZ(phi) RY(theta) RZ(lam)`` up to global phase.
"""
from __future__ import annotations

import ast
import json
import logging
import math
import operator
import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import linalg

log = logging.getLogger(__name__)

MAX_DENSE_QUBITS = 10

ONE_QUBIT_FIXED = ("H", "X", "Y", "Z", "S", "Sdg", "T", "Tdg", "SX")
ROTATIONS = ("RX", "RY", "RZ")
TWO_QUBIT = ("CX", "CZ")
WHITELIST = ONE_QUBIT_FIXED + ROTATIONS + ("U3",) + TWO_QUBIT
KINDS = WHITELIST + ("VUG", "RawUnitary")

QASM_NAMES = {
    "h": "H", "x": "X", "y": "Y", "z": "Z", "s": "S", "sdg": "Sdg", "t": "T",
    "tdg": "Tdg", "sx": "SX", "rx": "RX", "ry": "RY", "rz": "RZ", "u3": "U3",
    "cx": "CX", "cz": "CZ",
}
KIND_TO_QASM = {v: k for k, v in QASM_NAMES.items()}


class CircuitError(ValueError):
    pass


class QubitCapError(CircuitError):
    pass


def n_params(kind: str, arity: int = 1) -> int | None:
    if kind in ONE_QUBIT_FIXED or kind in TWO_QUBIT:
        return 0
    if kind in ROTATIONS:
        return 1
    if kind in ("U3", "VUG"):
        return 3 * arity if kind == "VUG" else 3
    if kind == "RawUnitary":
        return 2 * 4**arity
    return None


def arity(kind: str) -> int | None:
    if kind in TWO_QUBIT:
        return 2
    if kind in ONE_QUBIT_FIXED or kind in ROTATIONS or kind == "U3":
        return 1
    return None  # VUG / RawUnitary: variable


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind not in KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if len(set(self.qubits)) != len(self.qubits) or not self.qubits:
            raise CircuitError(f"{self.kind}: bad qubit list {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise CircuitError(f"{self.kind}: negative qubit index")
        want = arity(self.kind)
        if want is not None and len(self.qubits) != want:
            raise CircuitError(f"{self.kind} acts on {want} qubit(s), got {len(self.qubits)}")
        if self.kind == "VUG" and len(self.qubits) != 1:
            raise CircuitError("only single-qubit VUGs are supported")
        expect = n_params(self.kind, len(self.qubits))
        if len(self.params) != expect:
            raise CircuitError(f"{self.kind} takes {expect} parameter(s), got {len(self.params)}")
        if not all(math.isfinite(p) for p in self.params):
            raise CircuitError(f"{self.kind}: non-finite parameter")
        if self.kind == "RawUnitary":
            linalg.as_unitary(self.matrix())

    @classmethod
    def raw(cls, matrix: np.ndarray, qubits) -> "Gate":
        m = np.asarray(matrix, dtype=complex)
        flat = np.stack([m.real.ravel(), m.imag.ravel()], axis=1).ravel()
        return cls("RawUnitary", tuple(qubits), tuple(flat))

    @property
    def is_two_qubit(self) -> bool:
        return len(self.qubits) >= 2

    def matrix(self) -> np.ndarray:
        return gate_matrix(self.kind, self.params, len(self.qubits))

    def remap(self, mapping) -> "Gate":
        return Gate(self.kind, tuple(mapping[q] for q in self.qubits), self.params)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "qubits": list(self.qubits)}


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_qubits < 1:
            raise CircuitError("a circuit needs at least one qubit")
        for g in self.gates:
            if max(g.qubits) >= self.n_qubits:
                raise CircuitError(f"{g.kind} on qubit {max(g.qubits)} but circuit has {self.n_qubits}")

    def __len__(self):
        return len(self.gates)

    def __add__(self, other: "Circuit") -> "Circuit":
        return Circuit(max(self.n_qubits, other.n_qubits), self.gates + other.gates)

    def depth(self) -> int:
        return circuit_depth(self)

    def unitary(self, cap: int = MAX_DENSE_QUBITS) -> np.ndarray:
        return circuit_unitary(self, cap)

    def cx_count(self) -> int:
        return sum(1 for g in self.gates if g.kind in TWO_QUBIT)

    def to_dict(self) -> dict:
        return {"n_qubits": self.n_qubits, "gates": [g.to_dict() for g in self.gates]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Circuit":
        gates = [Gate(g["kind"], tuple(g["qubits"]), tuple(g.get("params", ()))) for g in data["gates"]]
        return cls(int(data["n_qubits"]), gates)

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        return cls.from_dict(json.loads(text))


# -- gate matrices -----------------------------------------------------------

_SQ2 = 1 / math.sqrt(2)


@lru_cache(maxsize=None)
def _fixed_matrix(kind: str) -> np.ndarray:
    t = np.exp(1j * math.pi / 4)
    table = {
        "H": [[_SQ2, _SQ2], [_SQ2, -_SQ2]],
        "X": [[0, 1], [1, 0]],
        "Y": [[0, -1j], [1j, 0]],
        "Z": [[1, 0], [0, -1]],
        "S": [[1, 0], [0, 1j]],
        "Sdg": [[1, 0], [0, -1j]],
        "T": [[1, 0], [0, t]],
        "Tdg": [[1, 0], [0, np.conj(t)]],
        "SX": [[(1 + 1j) / 2, (1 - 1j) / 2], [(1 - 1j) / 2, (1 + 1j) / 2]],
        # control = local qubit 0 (least significant), target = local qubit 1
        "CX": [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]],
        "CZ": np.diag([1, 1, 1, -1]),
    }
    m = np.array(table[kind], dtype=complex)
    m.setflags(write=False)
    return m


def rx(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def u3(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [[c, -np.exp(1j * lam) * s], [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]],
        dtype=complex,
    )


def u3_params(m: np.ndarray) -> tuple[float, float, float]:
    """Angles ``(theta, phi, lam)`` with ``u3(*angles) ~ m`` up to global phase."""
    m = np.asarray(m, dtype=complex)
    det = np.linalg.det(m)
    m = m / np.sqrt(det)  # now in SU(2)
    theta = 2 * math.atan2(abs(m[1, 0]), abs(m[0, 0]))
    a = np.angle(m[1, 1]) if abs(m[1, 1]) > 1e-12 else 0.0
    b = np.angle(m[1, 0]) if abs(m[1, 0]) > 1e-12 else 0.0
    # m = e^{ig} u3: m11 ~ e^{i(phi+lam)/2}, m10 ~ e^{i(phi-lam)/2}
    if abs(m[1, 0]) <= 1e-12:
        phi, lam = 2 * a, 0.0
    elif abs(m[1, 1]) <= 1e-12:
        phi, lam = 2 * b, 0.0
    else:
        phi, lam = a + b, a - b
    return float(theta), float(phi), float(lam)


def gate_matrix(kind: str, params=(), k: int = 1) -> np.ndarray:
    if kind in ONE_QUBIT_FIXED or kind in TWO_QUBIT:
        return _fixed_matrix(kind)
    if kind == "RX":
        return rx(params[0])
    if kind == "RY":
        return ry(params[0])
    if kind == "RZ":
        return rz(params[0])
    if kind in ("U3", "VUG"):
        return u3(*params)
    if kind == "RawUnitary":
        dim = 2**k
        arr = np.asarray(params, dtype=float).reshape(dim * dim, 2)
        return (arr[:, 0] + 1j * arr[:, 1]).reshape(dim, dim)
    raise CircuitError(f"unknown gate kind {kind!r}")


# -- evaluation --------------------------------------------------------------

def circuit_depth(c: Circuit) -> int:
    """ASAP layer count: longest chain of gates linked by shared qubits."""
    level = [0] * c.n_qubits
    for g in c.gates:
        top = max(level[q] for q in g.qubits) + 1
        for q in g.qubits:
            level[q] = top
    return max(level, default=0)


def circuit_unitary(c: Circuit, cap: int = MAX_DENSE_QUBITS) -> np.ndarray:
    if c.n_qubits > cap:
        raise QubitCapError(f"{c.n_qubits} qubits exceeds dense-unitary cap {cap}")
    u = np.eye(2**c.n_qubits, dtype=complex)
    for g in c.gates:
        u = linalg.apply_on(u, g.matrix(), g.qubits, c.n_qubits)
    return u


# -- OpenQASM 2.0 subset -----------------------------------------------------

class QasmError(CircuitError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_FUNCS = {"sin": math.sin, "cos": math.cos, "tan": math.tan, "exp": math.exp,
          "ln": math.log, "sqrt": math.sqrt}


def eval_angle(expr: str) -> float:
    """Evaluate an OpenQASM parameter expression (numbers, ``pi``, arithmetic)."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            return _FUNCS[node.func.id](*[ev(a) for a in node.args])
        raise ValueError(f"unsupported expression element {ast.dump(node)}")

    return ev(ast.parse(expr.replace("^", "**"), mode="eval"))


_QREG = re.compile(r"qreg\s+([A-Za-z_]\w*)\s*\[\s*(\d+)\s*\]$")
_CREG = re.compile(r"creg\s+([A-Za-z_]\w*)\s*\[\s*(\d+)\s*\]$")
_CALL = re.compile(r"([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*(.*)$", re.S)
_ARG = re.compile(r"([A-Za-z_]\w*)\s*(?:\[\s*(\d+)\s*\])?$")


def _statements(source: str):
    """Yield ``(text, line, col)`` per ``;``-terminated statement, comments removed."""
    text = re.sub(r"//[^\n]*", lambda m: " " * len(m.group()), source)
    start = 0
    for m in re.finditer(r";", text):
        raw = text[start:m.start()]
        stripped = raw.strip()
        if stripped:
            offset = start + (len(raw) - len(raw.lstrip()))
            line = text.count("\n", 0, offset) + 1
            col = offset - (text.rfind("\n", 0, offset) + 1) + 1
            yield stripped, line, col
        start = m.end()
    tail = text[start:].strip()
    if tail:
        offset = start + (len(text[start:]) - len(text[start:].lstrip()))
        line = text.count("\n", 0, offset) + 1
        col = offset - (text.rfind("\n", 0, offset) + 1) + 1
        raise QasmError("statement is missing a terminating ';'", line, col)


def parse_qasm(source: str) -> Circuit:
    qreg: tuple[str, int] | None = None
    gates: list[Gate] = []
    stripped_measures = 0
    for stmt, line, col in _statements(source):
        head = stmt.split(None, 1)[0]
        if head == "OPENQASM":
            if not re.fullmatch(r"OPENQASM\s+2(\.0)?", stmt):
                raise QasmError(f"unsupported version statement {stmt!r}", line, col)
            continue
        if head == "include":
            continue
        if head == "qreg":
            m = _QREG.match(stmt)
            if not m:
                raise QasmError(f"malformed qreg declaration {stmt!r}", line, col)
            if qreg is not None:
                raise QasmError("multiple qreg declarations are not supported", line, col)
            qreg = (m.group(1), int(m.group(2)))
            if qreg[1] < 1:
                raise QasmError("qreg must have at least one qubit", line, col)
            continue
        if head == "creg":
            if not _CREG.match(stmt):
                raise QasmError(f"malformed creg declaration {stmt!r}", line, col)
            continue
        if head == "barrier":
            continue
        if head == "measure":
            stripped_measures += 1
            continue
        if qreg is None:
            raise QasmError("gate applied before any qreg declaration", line, col)
        gates.extend(_parse_call(stmt, line, col, qreg))
    if qreg is None:
        raise QasmError("no qreg declaration found", 1, 1)
    if stripped_measures:
        log.warning("stripped %d measure statement(s); pulse compilation is unitary-only", stripped_measures)
    return Circuit(qreg[1], gates)


def _parse_call(stmt: str, line: int, col: int, qreg: tuple[str, int]) -> list[Gate]:
    m = _CALL.match(stmt)
    if not m:
        raise QasmError(f"cannot parse statement {stmt!r}", line, col)
    name, params_src, args_src = m.group(1), m.group(2), m.group(3)
    kind = QASM_NAMES.get(name)
    if kind is None:
        raise QasmError(f"unsupported gate {name!r}", line, col)
    params: list[float] = []
    if params_src is not None and params_src.strip():
        for piece in _split_params(params_src):
            try:
                params.append(eval_angle(piece))
            except (ValueError, SyntaxError, ZeroDivisionError, TypeError) as exc:
                raise QasmError(f"bad parameter expression {piece!r}: {exc}", line, col) from None
    if len(params) != n_params(kind):
        raise QasmError(f"{name} expects {n_params(kind)} parameter(s), got {len(params)}", line, col)
    args = [a.strip() for a in args_src.split(",")] if args_src.strip() else []
    if len(args) != arity(kind):
        raise QasmError(f"{name} expects {arity(kind)} qubit argument(s), got {len(args)}", line, col)
    operands: list[list[int]] = []
    for a in args:
        am = _ARG.match(a)
        if not am:
            raise QasmError(f"malformed qubit argument {a!r}", line, col + stmt.find(a))
        reg, idx = am.group(1), am.group(2)
        if reg != qreg[0]:
            raise QasmError(f"unknown register {reg!r}", line, col + stmt.find(a))
        if idx is None:
            operands.append(list(range(qreg[1])))
        else:
            i = int(idx)
            if i >= qreg[1]:
                raise QasmError(f"qubit index {i} out of range for {reg}[{qreg[1]}]", line, col + stmt.find(a))
            operands.append([i])
    width = max(len(o) for o in operands)
    if any(len(o) not in (1, width) for o in operands):
        raise QasmError("register arguments of mismatched size", line, col)
    out = []
    for i in range(width):
        qs = tuple(o[0] if len(o) == 1 else o[i] for o in operands)
        if len(set(qs)) != len(qs):
            raise QasmError(f"{name} applied to repeated qubit {qs}", line, col)
        out.append(Gate(kind, qs, tuple(params)))
    return out


def _split_params(src: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in src:
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur.append(ch)
    parts.append("".join(cur).strip())
    return parts


def to_qasm(c: Circuit) -> str:
    """Serialize a whitelist-only circuit back to OpenQASM 2.0."""
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{c.n_qubits}];"]
    for g in c.gates:
        if g.kind not in KIND_TO_QASM:
            raise CircuitError(f"{g.kind} has no OpenQASM 2.0 spelling")
        name = KIND_TO_QASM[g.kind]
        if g.params:
            name += "(" + ",".join(repr(p) for p in g.params) + ")"
        lines.append(f"{name} " + ",".join(f"q[{q}]" for q in g.qubits) + ";")
    return "\n".join(lines) + "\n"


def random_circuit(n_qubits: int, n_gates: int, rng: np.random.Generator,
                   kinds=("H", "X", "Z", "S", "Sdg", "T", "Tdg", "SX", "RX", "RZ", "RY", "CX", "CZ")) -> Circuit:
    """Random whitelist circuit; rotation angles uniform in [-pi, pi)."""
    gates = []
    for _ in range(n_gates):
        kind = kinds[rng.integers(len(kinds))]
        if arity(kind) == 2 and n_qubits < 2:
            kind = "H"
        qs = tuple(int(q) for q in rng.choice(n_qubits, size=arity(kind), replace=False))
        params = tuple(float(x) for x in rng.uniform(-math.pi, math.pi, size=n_params(kind)))
        gates.append(Gate(kind, qs, params))
    return Circuit(n_qubits, gates)
