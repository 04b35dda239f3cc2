"""GRAPE optimal control over piecewise-constant pulses, and minimal-duration search.

Units: hbar = 1, time in ns, amplitudes in rad/ns. A slot propagator is
``exp(-i dt (H0 + sum_j a_j H_j))``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from . import linalg

log = logging.getLogger(__name__)

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class QOCError(RuntimeError):
    pass


class Infeasible(QOCError):
    def __init__(self, msg: str, best: "PulseSchedule"):
        super().__init__(msg)
        self.best = best


@dataclass(frozen=True)
class HardwareModel:
    n_qubits: int
    drift: np.ndarray
    controls: tuple[tuple[str, np.ndarray], ...]
    max_amp: float = 0.5
    dt: float = 1.0

    def __post_init__(self):
        dim = 2**self.n_qubits
        if self.dt <= 0 or self.max_amp <= 0:
            raise ValueError("dt and max_amp must be positive")
        for label, h in (("drift", self.drift),) + tuple(self.controls):
            h = np.asarray(h)
            if h.shape != (dim, dim):
                raise ValueError(f"{label}: expected {dim}x{dim}, got {h.shape}")
            if not linalg.is_hermitian(h):
                raise ValueError(f"{label} is not Hermitian")

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.controls]

    @property
    def control_stack(self) -> np.ndarray:
        return np.array([h for _, h in self.controls], dtype=complex)

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "drift": linalg.to_pairs(self.drift),
            "controls": [{"label": label, "matrix": linalg.to_pairs(h)} for label, h in self.controls],
            "max_amp": self.max_amp,
            "dt": self.dt,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HardwareModel":
        return cls(
            int(data["n_qubits"]),
            linalg.from_pairs(data["drift"]),
            tuple((c["label"], linalg.from_pairs(c["matrix"])) for c in data["controls"]),
            float(data.get("max_amp", 0.5)),
            float(data.get("dt", 1.0)),
        )


def _op_on(op: np.ndarray, qubits, n: int) -> np.ndarray:
    return linalg.embed(op, list(qubits), n)


@dataclass(frozen=True)
class DeviceConfig:
    """Hardware family from which per-group models are cut.

    Single-qubit terms are ``sigma/2`` on every qubit; coupling terms are
    ``sigma (x) sigma / 2`` on neighbouring pairs of a line (or all pairs).
    ``drift_zz`` adds an always-on ``J Z(x)Z/2`` per coupled pair.
    """
    dt: float = 1.0
    max_amp: float = 0.5
    single_controls: tuple[str, ...] = ("x", "y")
    coupling_controls: tuple[str, ...] = ("xx",)
    topology: str = "line"
    drift_zz: float = 0.0
    gate_duration_1q_ns: float = 20.0
    gate_duration_2q_ns: float = 200.0

    def pairs(self, n: int) -> list[tuple[int, int]]:
        if self.topology == "line":
            return [(q, q + 1) for q in range(n - 1)]
        if self.topology == "all":
            return [(p, q) for p in range(n) for q in range(p + 1, n)]
        raise ValueError(f"unknown topology {self.topology!r}")

    def model(self, n: int) -> HardwareModel:
        dim = 2**n
        controls = []
        for q in range(n):
            for axis in self.single_controls:
                controls.append((f"{axis}{q}", _op_on(_PAULI[axis] / 2, [q], n)))
        drift = np.zeros((dim, dim), dtype=complex)
        for p, q in self.pairs(n):
            for term in self.coupling_controls:
                op = np.kron(_PAULI[term[1]], _PAULI[term[0]]) / 2
                controls.append((f"{term}{p}{q}", _op_on(op, [p, q], n)))
            if self.drift_zz:
                drift += self.drift_zz * _op_on(np.kron(_PAULI["z"], _PAULI["z"]) / 2, [p, q], n)
        return HardwareModel(n, drift, tuple(controls), self.max_amp, self.dt)

    def fingerprint(self) -> str:
        blob = json.dumps(self.__dict__, sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def load(cls, path) -> "DeviceConfig":
        """Read a JSON or TOML device description (unknown keys are rejected)."""
        path = Path(path)
        text = path.read_text()
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # python < 3.11
                import tomli as tomllib
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
        data = data.get("device", data)
        for key in ("single_controls", "coupling_controls"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def default_model(n: int) -> HardwareModel:
    return DeviceConfig().model(n)


@dataclass(frozen=True)
class GrapeConfig:
    fidelity_threshold: float = 0.999
    target_fidelity: float = 1 - 1e-6
    max_iters: int = 300
    restarts: int = 3
    rng_seed: int = 0
    n_max: int = 256
    # first start draws from +-init_scale*max_amp, later restarts from +-restart_scale*max_amp
    init_scale: float = 0.1
    restart_scale: float = 1.0
    stall_window: int = 25
    stall_tol: float = 1e-4

    def __post_init__(self):
        if not 0 < self.fidelity_threshold <= 1:
            raise ValueError("fidelity_threshold must lie in (0, 1]")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass
class PulseSchedule:
    dt: float
    n_slots: int
    amps: np.ndarray
    fidelity: float
    target_key: str = ""
    controls: tuple[str, ...] = ()
    history: list[float] = field(default_factory=list, repr=False, compare=False)

    @property
    def duration(self) -> float:
        return self.n_slots * self.dt

    def to_dict(self) -> dict:
        return {
            "dt_ns": self.dt,
            "n_slots": self.n_slots,
            "controls": list(self.controls),
            "amps": [[float(a) for a in row] for row in np.asarray(self.amps)],
            "fidelity": self.fidelity,
            "target_key": self.target_key,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PulseSchedule":
        amps = np.asarray(data["amps"], dtype=float).reshape(len(data["controls"]), int(data["n_slots"]))
        return cls(float(data["dt_ns"]), int(data["n_slots"]), amps, float(data["fidelity"]),
                   data.get("target_key", ""), tuple(data["controls"]))


# -- propagation -------------------------------------------------------------

def _slot_hamiltonians(model: HardwareModel, amps: np.ndarray) -> np.ndarray:
    return model.drift[None] + np.einsum("jk,jab->kab", amps, model.control_stack)


def _check_amps(model: HardwareModel, amps: np.ndarray, n_slots: int) -> np.ndarray:
    amps = np.asarray(amps, dtype=float)
    if amps.shape != (len(model.controls), n_slots):
        raise ValueError(f"amps must have shape ({len(model.controls)}, {n_slots}), got {amps.shape}")
    if np.any(np.abs(amps) > model.max_amp * (1 + 1e-12)):
        raise ValueError(f"amplitude exceeds max_amp={model.max_amp}")
    return amps


def simulate(model: HardwareModel, amps, n_slots: int | None = None) -> np.ndarray:
    amps = np.asarray(amps, dtype=float)
    n_slots = amps.shape[1] if n_slots is None else n_slots
    amps = _check_amps(model, amps, n_slots)
    u = np.eye(2**model.n_qubits, dtype=complex)
    for h in _slot_hamiltonians(model, amps):
        u = linalg.expm_skew(h, model.dt) @ u
    return u


def fidelity(target: np.ndarray, u: np.ndarray) -> float:
    """Phase-invariant gate fidelity ``|Tr(target^dag u)| / d`` (= 1 - dist)."""
    return 1.0 - linalg.dist(target, u)


def _overlap_and_grad(model: HardwareModel, target_h: np.ndarray, amps: np.ndarray):
    """``z = Tr(target^dag U)`` and ``dz/d amps`` via exact slot-propagator derivatives."""
    dt = model.dt
    hs = _slot_hamiltonians(model, amps)
    evals, evecs = np.linalg.eigh(hs)
    phases = np.exp(-1j * dt * evals)  # (N, d)
    props = np.einsum("kab,kb,kcb->kac", evecs, phases, evecs.conj())
    n = len(props)
    d = target_h.shape[0]
    prefix = np.empty((n + 1, d, d), dtype=complex)
    prefix[0] = np.eye(d)
    for k in range(n):
        prefix[k + 1] = props[k] @ prefix[k]
    z = np.trace(target_h @ prefix[n])
    # divided differences of exp(mu), mu = -i dt lambda
    mu = -1j * dt * evals
    diff = mu[:, :, None] - mu[:, None, :]
    num = phases[:, :, None] - phases[:, None, :]
    same = np.abs(diff) < 1e-12
    phi = np.where(same, phases[:, :, None], num / np.where(same, 1.0, diff))
    backs = np.empty_like(prefix[:n])
    back = target_h
    for k in range(n - 1, -1, -1):
        backs[k] = back
        back = back @ props[k]
    vh = np.conj(np.swapaxes(evecs, 1, 2))
    w = vh @ (prefix[:n] @ backs) @ evecs
    # dz_jk = sum_ab w[b,a] phi[a,b] (V^dag E_j V)[a,b] = sum_ab q[b,a] E_j[a,b]
    q = evecs @ np.swapaxes(np.swapaxes(w, 1, 2) * phi, 1, 2) @ vh
    flat_e = model.control_stack.reshape(len(model.controls), -1) * (-1j * dt)
    grad = (np.swapaxes(q, 1, 2).reshape(n, -1) @ flat_e.T).T
    return z, grad


def fidelity_and_grad(model: HardwareModel, target: np.ndarray, amps) -> tuple[float, np.ndarray]:
    """``F = |Tr(target^dag U)|/d`` and ``dF/d amps`` (shape of ``amps``)."""
    amps = np.asarray(amps, dtype=float)
    d = target.shape[0]
    z, dz = _overlap_and_grad(model, np.asarray(target).conj().T, amps)
    az = abs(z)
    if az == 0:
        return 0.0, np.zeros_like(amps)
    return az / d, np.real(np.conj(z) * dz) / (az * d)


def _seed_for(cfg: GrapeConfig, target: np.ndarray, n_slots: int) -> np.random.Generator:
    from .pulselib import canonical_key

    key = int(canonical_key(target)[:12], 16)
    return np.random.default_rng([cfg.rng_seed, n_slots, key])


def resample(amps: np.ndarray, n_slots: int, max_amp: float) -> np.ndarray:
    """Stretch or compress a pulse to ``n_slots``, keeping each control's area where bounds allow."""
    amps = np.asarray(amps, dtype=float)
    old = amps.shape[1]
    t_old = (np.arange(old) + 0.5) / old
    t_new = (np.arange(n_slots) + 0.5) / n_slots
    out = np.stack([np.interp(t_new, t_old, row) for row in amps]) * (old / n_slots)
    return np.clip(out, -max_amp, max_amp)


def grape_optimize(model: HardwareModel, target: np.ndarray, n_slots: int,
                   cfg: GrapeConfig = GrapeConfig(), target_key: str = "",
                   init: np.ndarray | None = None, stop_at: float | None = None) -> PulseSchedule:
    """``init`` (shape ``(n_controls, n_slots)``) replaces the first random start;
    ``stop_at`` overrides ``cfg.target_fidelity`` as the early-exit fidelity."""
    stop_at = cfg.target_fidelity if stop_at is None else stop_at
    target = np.asarray(target, dtype=complex)
    d = 2**model.n_qubits
    if target.shape != (d, d):
        raise ValueError(f"target is {target.shape}, model acts on dimension {d}")
    n_ctrl = len(model.controls)
    target_h = target.conj().T
    rng = _seed_for(cfg, target, n_slots)

    zero = np.zeros((n_ctrl, n_slots))
    f0 = fidelity(target, simulate(model, zero))
    best = PulseSchedule(model.dt, n_slots, zero, f0, target_key, tuple(model.labels), [f0])
    if f0 >= stop_at:
        return best

    bounds = [(-model.max_amp, model.max_amp)] * (n_ctrl * n_slots)

    def cost(x):
        z, dz = _overlap_and_grad(model, target_h, x.reshape(n_ctrl, n_slots))
        return 1 - abs(z) ** 2 / d**2, (-2 * np.real(np.conj(z) * dz) / d**2).ravel()

    for attempt in range(cfg.restarts):
        scale = (cfg.init_scale if attempt == 0 else cfg.restart_scale) * model.max_amp
        x0 = rng.uniform(-scale, scale, n_ctrl * n_slots)
        if attempt == 0 and init is not None:
            x0 = np.clip(np.asarray(init, dtype=float), -model.max_amp, model.max_amp).ravel()
        history = [math.sqrt(max(0.0, 1 - cost(x0)[0]))]

        def callback(intermediate_result):
            f = math.sqrt(max(0.0, 1 - intermediate_result.fun))
            history.append(f)
            if f >= stop_at:
                raise StopIteration
            # plateau below threshold: give the next restart the remaining budget
            w = cfg.stall_window
            if w and len(history) > w and f < cfg.fidelity_threshold and f - history[-1 - w] < cfg.stall_tol:
                raise StopIteration

        res = minimize(cost, x0, jac=True, method="L-BFGS-B", bounds=bounds, callback=callback,
                       options={"maxiter": cfg.max_iters, "ftol": 1e-15, "gtol": 1e-12})
        amps = np.clip(res.x.reshape(n_ctrl, n_slots), -model.max_amp, model.max_amp)
        f = fidelity(target, simulate(model, amps))
        if f > best.fidelity:
            best = PulseSchedule(model.dt, n_slots, amps, f, target_key, tuple(model.labels), history)
        if best.fidelity >= cfg.fidelity_threshold:
            break
    return best


def min_duration(model: HardwareModel, target: np.ndarray, cfg: GrapeConfig = GrapeConfig(),
                 target_key: str = "") -> PulseSchedule:
    """Smallest slot count whose GRAPE fidelity clears the threshold.

    Gallops ``1, 2, 4, ...`` up to ``cfg.n_max`` to bracket the boundary, then
    bisects, assuming feasibility is monotone in the slot count.
    """
    tried: dict[int, PulseSchedule] = {}
    # probes only need to show feasibility; the winner is polished afterwards
    probe_stop = min(cfg.target_fidelity, 1 - (1 - cfg.fidelity_threshold) / 10)

    def run(n, init=None):
        if n not in tried:
            tried[n] = grape_optimize(model, target, n, cfg, target_key, init, probe_stop)
        return tried[n]

    def ok(n):
        return run(n).fidelity >= cfg.fidelity_threshold

    lo, hi = 0, 1
    while not ok(hi):
        if hi >= cfg.n_max:
            best = max(tried.values(), key=lambda s: s.fidelity)
            raise Infeasible(f"fidelity {best.fidelity:.6f} < {cfg.fidelity_threshold} at {cfg.n_max} slots", best)
        lo, hi = hi, min(2 * hi, cfg.n_max)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        run(mid, resample(tried[hi].amps, mid, model.max_amp))
        if ok(mid):
            hi = mid
        else:
            lo = mid
    anomalies = [n for n, s in tried.items() if n > hi and s.fidelity < cfg.fidelity_threshold]
    if anomalies:
        log.warning("non-monotone feasibility: slots %s failed above the found minimum %d", sorted(anomalies), hi)
    found = tried[hi]
    if found.fidelity >= cfg.target_fidelity:
        return found
    polished = grape_optimize(model, target, hi, replace(cfg, restarts=1), target_key, found.amps)
    return polished if polished.fidelity > found.fidelity else found

