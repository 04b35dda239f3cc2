import json

import numpy as np
import pytest

from pulsecomp import ir, linalg, qoc
from pulsecomp.qoc import DeviceConfig, GrapeConfig, HardwareModel, PulseSchedule

SX2 = np.array([[0, 1], [1, 0]], dtype=complex) / 2
X = ir.gate_matrix("X")
CX = ir.gate_matrix("CX")


def _rabi_model(dt=1.0):
    return HardwareModel(1, np.zeros((2, 2)), (("x0", SX2),), max_amp=0.5, dt=dt)


def test_model_validation():
    with pytest.raises(ValueError):
        HardwareModel(1, np.zeros((2, 2)), (("bad", np.array([[0, 1], [0, 0]])),))
    with pytest.raises(ValueError):
        HardwareModel(1, np.zeros((4, 4)), ())
    with pytest.raises(ValueError):
        HardwareModel(1, np.zeros((2, 2)), (), dt=0)


def test_default_model_layout():
    m = qoc.default_model(3)
    assert m.labels == ["x0", "y0", "x1", "y1", "x2", "y2", "xx01", "xx12"]
    assert np.allclose(m.control_stack[-1], linalg.embed(np.kron(SX2 * 2, SX2), [1, 2], 3))
    assert not m.drift.any()
    assert (m.dt, m.max_amp) == (1.0, 0.5)


def test_model_dict_round_trip():
    m = DeviceConfig(drift_zz=0.01, topology="all").model(3)
    again = HardwareModel.from_dict(json.loads(json.dumps(m.to_dict())))
    assert again.labels == m.labels
    assert np.allclose(again.drift, m.drift)


def test_device_load(tmp_path):
    toml = tmp_path / "m.toml"
    toml.write_text('[device]\nmax_amp = 0.25\ndt = 2.0\nsingle_controls = ["x"]\n')
    dev = DeviceConfig.load(toml)
    assert dev.max_amp == 0.25 and dev.single_controls == ("x",)
    js = tmp_path / "m.json"
    js.write_text(json.dumps({"topology": "all", "gate_duration_2q_ns": 150}))
    assert DeviceConfig.load(js).pairs(3) == [(0, 1), (0, 2), (1, 2)]
    js.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(TypeError):
        DeviceConfig.load(js)


def test_simulate_zero_is_identity():
    m = qoc.default_model(2)
    assert np.allclose(qoc.simulate(m, np.zeros((len(m.controls), 5))), np.eye(4))


def test_simulate_rabi():
    # constant amp a over N slots with a*N*dt = pi is an X rotation
    n = 10
    u = qoc.simulate(_rabi_model(), np.full((1, n), np.pi / n))
    assert linalg.dist(u, X) <= 1e-9
    m2 = _rabi_model(dt=np.pi / 2)
    assert linalg.dist(qoc.simulate(m2, np.full((1, 4), 0.5)), X) <= 1e-9


def test_simulate_slot_splitting():
    rng = np.random.default_rng(0)
    m = qoc.default_model(2)
    amps = rng.uniform(-0.5, 0.5, (len(m.controls), 6))
    m_half = HardwareModel(2, m.drift, m.controls, m.max_amp, m.dt / 2)
    u1 = qoc.simulate(m, amps)
    u2 = qoc.simulate(m_half, np.repeat(amps, 2, axis=1))
    assert np.abs(u1 - u2).max() <= 1e-10


def test_simulate_bounds():
    m = _rabi_model()
    with pytest.raises(ValueError):
        qoc.simulate(m, np.full((1, 3), 0.6))
    with pytest.raises(ValueError):
        qoc.simulate(m, np.zeros((2, 3)))


@pytest.mark.parametrize("n_qubits", [1, 2])
def test_gradient_matches_finite_differences(n_qubits):
    rng = np.random.default_rng(n_qubits)
    m = qoc.default_model(n_qubits)
    for _ in range(5):
        target = linalg.random_unitary(2**n_qubits, rng)
        amps = rng.uniform(-0.4, 0.4, (len(m.controls), 6))
        _, g = qoc.fidelity_and_grad(m, target, amps)
        fd = np.zeros_like(amps)
        h = 1e-6
        for idx in np.ndindex(*amps.shape):
            e = np.zeros_like(amps)
            e[idx] = h
            fd[idx] = (qoc.fidelity_and_grad(m, target, amps + e)[0] - qoc.fidelity_and_grad(m, target, amps - e)[0]) / (2 * h)
        assert np.linalg.norm(g - fd) / np.linalg.norm(fd) <= 1e-4


def test_fidelity_is_one_minus_dist():
    rng = np.random.default_rng(3)
    m = qoc.default_model(2)
    target = linalg.random_unitary(4, rng)
    amps = rng.uniform(-0.5, 0.5, (len(m.controls), 4))
    f, _ = qoc.fidelity_and_grad(m, target, amps)
    assert abs(f - (1 - linalg.dist(target, qoc.simulate(m, amps)))) <= 1e-12


def test_identity_target_converges_immediately():
    m = qoc.default_model(2)
    s = qoc.grape_optimize(m, np.eye(4), 5)
    assert s.fidelity == pytest.approx(1.0)
    assert not s.amps.any()
    assert len(s.history) == 1


def test_x_pulse():
    m = qoc.default_model(1)
    s = qoc.grape_optimize(m, X, 10)
    assert s.fidelity >= 0.9999
    area = np.hypot(*s.amps).sum() * m.dt
    assert abs(area - np.pi) <= 0.05 * np.pi
    assert np.abs(s.amps).max() <= m.max_amp
    assert linalg.dist(qoc.simulate(m, s.amps), X) == pytest.approx(1 - s.fidelity, abs=1e-12)


def test_history_monotone():
    s = qoc.grape_optimize(qoc.default_model(2), CX, 12)
    assert all(b >= a - 1e-12 for a, b in zip(s.history, s.history[1:]))


def test_cx_pulse():
    m = qoc.default_model(2)
    s = qoc.grape_optimize(m, CX, 16)
    assert s.fidelity >= 0.999
    assert linalg.dist(qoc.simulate(m, s.amps), CX) <= 1e-3


def test_min_duration_identity():
    s = qoc.min_duration(qoc.default_model(1), np.eye(2))
    assert s.n_slots == 1 and not s.amps.any()


def test_min_duration_x_area_bound():
    m = qoc.default_model(1)
    cfg = GrapeConfig()
    s = qoc.min_duration(m, X, cfg)
    bound = np.pi / (m.max_amp * m.dt)
    assert s.n_slots in (6, 7, 8)
    assert abs(s.n_slots - bound) <= 1
    assert s.fidelity >= cfg.fidelity_threshold
    assert qoc.grape_optimize(m, X, s.n_slots - 1, cfg).fidelity < cfg.fidelity_threshold


def test_min_duration_infeasible():
    m = HardwareModel(1, np.zeros((2, 2)), (("x0", SX2),), max_amp=0.5)
    # only x control: a Z rotation is unreachable
    with pytest.raises(qoc.Infeasible) as err:
        qoc.min_duration(m, ir.gate_matrix("Z"), GrapeConfig(n_max=8, restarts=1, max_iters=50))
    assert err.value.best.fidelity < 0.999


def test_deterministic_seeding():
    m = qoc.default_model(2)
    a = qoc.grape_optimize(m, CX, 10)
    b = qoc.grape_optimize(m, CX, 10)
    assert np.array_equal(a.amps, b.amps)


def test_resample_keeps_area():
    amps = np.array([[0.1, 0.2, 0.3, 0.2]])
    out = qoc.resample(amps, 8, 0.5)
    assert out.shape == (1, 8)
    assert out.sum() == pytest.approx(amps.sum(), rel=0.05)


def test_schedule_json():
    s = PulseSchedule(1.0, 2, np.array([[0.1, -0.2]]), 0.9995, "abc", ("x0",))
    d = s.to_dict()
    assert set(d) == {"dt_ns", "n_slots", "controls", "amps", "fidelity", "target_key"}
    again = PulseSchedule.from_dict(json.loads(json.dumps(d)))
    assert again.to_dict() == d
    assert np.array_equal(again.amps, s.amps)
    assert again.duration == 2.0
