"""Dense complex matrix kernel shared by synthesis, optimal control and the cache.

Unitaries are plain ``numpy`` complex128 arrays. Functions that produce a
unitary validate it against :data:`TOL.unitarity` before returning.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    unitarity: float = 1e-9
    hermitian: float = 1e-9
    equality: float = 1e-8
    synthesis: float = 1e-8
    canonical_pivot: float = 1e-6


TOL = Tolerances()


class LinalgError(ValueError):
    pass


def unitarity_error(u: np.ndarray) -> float:
    u = np.asarray(u)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def is_unitary(u: np.ndarray, tol: float | None = None) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return unitarity_error(u) <= (TOL.unitarity if tol is None else tol)


def as_unitary(m, tol: float | None = None) -> np.ndarray:
    """Coerce ``m`` to a complex square array and check the unitarity invariant."""
    u = np.asarray(m, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise LinalgError(f"expected a square matrix, got shape {u.shape}")
    dim = u.shape[0]
    if dim & (dim - 1) or dim == 0:
        raise LinalgError(f"dimension {dim} is not a power of two")
    err = unitarity_error(u)
    if err > (TOL.unitarity if tol is None else tol):
        raise LinalgError(f"matrix is not unitary (max |U^dag U - I| = {err:.3e})")
    return u


def n_qubits_of(u: np.ndarray) -> int:
    return int(u.shape[0]).bit_length() - 1


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise LinalgError(f"dimension mismatch: {a.shape} vs {b.shape}")


def dist(a: np.ndarray, b: np.ndarray) -> float:
    """Phase-invariant distance ``1 - |Tr(a^dag b)| / d``, clamped to [0, 1]."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_same_dim(a, b)
    overlap = abs(np.vdot(a, b)) / a.shape[0]
    return float(min(1.0, max(0.0, 1.0 - overlap)))


def is_hermitian(h: np.ndarray, tol: float | None = None) -> bool:
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        return False
    return float(np.max(np.abs(h - h.conj().T), initial=0.0)) <= (TOL.hermitian if tol is None else tol)


def expm_skew(h: np.ndarray, t: float) -> np.ndarray:
    """Propagator ``exp(-i h t)`` for Hermitian ``h`` via eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h):
        raise LinalgError("expm_skew requires a Hermitian generator")
    evals, evecs = np.linalg.eigh(h)
    return (evecs * np.exp(-1j * t * evals)) @ evecs.conj().T


def expm_skew_pade(h: np.ndarray, t: float) -> np.ndarray:
    """Same propagator via scipy's scaling-and-squaring Pade; cross-check path."""
    from scipy.linalg import expm

    h = np.asarray(h, dtype=complex)
    if not is_hermitian(h):
        raise LinalgError("expm_skew requires a Hermitian generator")
    return expm(-1j * t * h)


def phase_canonicalize(u: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the first significant entry is real positive."""
    u = np.asarray(u, dtype=complex)
    flat = u.ravel()
    idx = np.flatnonzero(np.abs(flat) > TOL.canonical_pivot)
    if idx.size == 0:
        return u.copy()
    pivot = flat[idx[0]]
    return u * (abs(pivot) / pivot)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tensor product; ``a`` acts on the more significant qubits."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    _check_same_dim(a, b)
    return a @ b


def apply_on(u: np.ndarray, gate: np.ndarray, qubits, n: int) -> np.ndarray:
    """Left-multiply the ``2^n``-dim matrix ``u`` by ``gate`` acting on ``qubits``.

    Little-endian: qubit 0 is the least significant bit of a basis index, and
    ``qubits[0]`` is the least significant local qubit of ``gate``.
    """
    k = len(qubits)
    cols = u.shape[1]
    t = u.reshape((2,) * n + (cols,))
    g = np.asarray(gate, dtype=complex).reshape((2,) * (2 * k))
    # local qubit j <-> gate axis k-1-j; global qubit q <-> tensor axis n-1-q
    in_axes = [n - 1 - qubits[k - 1 - i] for i in range(k)]
    out = np.tensordot(g, t, axes=(list(range(k, 2 * k)), in_axes))
    out = np.moveaxis(out, list(range(k)), in_axes)
    return out.reshape(2**n, cols)


def embed(gate: np.ndarray, qubits, n: int) -> np.ndarray:
    return apply_on(np.eye(2**n, dtype=complex), gate, list(qubits), n)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (z + z.conj().T) / 2


def to_pairs(u: np.ndarray) -> list:
    """Row-major ``[[re, im], ...]`` rows for JSON."""
    u = np.asarray(u, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in u]


def from_pairs(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]
