import json

import numpy as np
import pytest

from pulsecomp import linalg
from pulsecomp.pulselib import LibraryError, PulseLibrary, canonical_key
from pulsecomp.qoc import PulseSchedule

I2_KEY = "34482416f2474c6ce657fb7bb66ddb3a4299e8b9e328528fc789ce1ceaf4ce85"


def _sched(n=4, fid=0.9999):
    return PulseSchedule(1.0, n, np.zeros((2, n)), fid, "", ("x0", "y0"))


def test_key_phase_invariant():
    rng = np.random.default_rng(0)
    for _ in range(20):
        u = linalg.random_unitary(4, rng)
        assert canonical_key(u) == canonical_key(np.exp(1j * rng.uniform(0, 2 * np.pi)) * u)


def test_key_stable_constant():
    # pinned so any change of serialization is noticed
    assert canonical_key(np.eye(2)) == I2_KEY
    assert canonical_key(-1j * np.eye(2, dtype=complex)) == I2_KEY
    assert canonical_key(np.eye(4)) != I2_KEY


def test_key_distinguishes():
    rng = np.random.default_rng(1)
    for _ in range(50):
        u = linalg.random_unitary(4, rng)
        h = linalg.random_hermitian(4, rng)
        v = linalg.expm_skew(h, 1.0) @ u
        if linalg.dist(u, v) > 0.1:
            assert canonical_key(u) != canonical_key(v)


def test_insert_lookup():
    lib = PulseLibrary()
    u = linalg.random_unitary(2, np.random.default_rng(2))
    assert lib.lookup(u) is None
    s = _sched()
    lib.insert(u, s)
    assert lib.lookup(u) is s
    assert lib.lookup(np.exp(0.4j) * u) is s
    assert u in lib and len(lib) == 1


def test_phase_lookup_many():
    rng = np.random.default_rng(3)
    lib = PulseLibrary()
    pairs = []
    for _ in range(100):
        u = linalg.random_unitary(4, rng)
        lib.insert(u, _sched())
        pairs.append((u, rng.uniform(0, 2 * np.pi)))
    assert all(lib.lookup(np.exp(1j * phi) * u) is not None for u, phi in pairs)


def test_shorter_wins_and_idempotent():
    lib = PulseLibrary()
    u = np.eye(2)
    s10, s8 = _sched(10), _sched(8)
    lib.insert(u, s10)
    lib.insert(u, s10)
    assert len(lib) == 1
    lib.insert(u, s8)
    assert lib.lookup(u) is s8
    lib.insert(u, _sched(12))
    assert lib.lookup(u) is s8


def test_admission_threshold():
    with pytest.raises(LibraryError):
        PulseLibrary().insert(np.eye(2), _sched(fid=0.9))


def test_persistence_round_trip(tmp_path):
    path = tmp_path / "lib.jsonl"
    rng = np.random.default_rng(4)
    us = [linalg.random_unitary(4, rng) for _ in range(5)]
    with PulseLibrary(path) as lib:
        for u in us:
            lib.insert(u, _sched(6))
    lines = path.read_text().splitlines()
    assert json.loads(lines[0]) == {"format_version": 1}
    assert len(lines) == 6
    again = PulseLibrary(path)
    assert len(again) == 5
    by_key = {e.key: e for e in again.entries()}
    for u in us:
        e = by_key[canonical_key(u)]
        assert np.array_equal(e.matrix, u)
        assert e.schedule.to_dict() == _sched(6).to_dict()


def test_corrupt_entry_skipped(tmp_path):
    path = tmp_path / "lib.jsonl"
    with PulseLibrary(path) as lib:
        lib.insert(np.eye(2), _sched())
        lib.insert(np.array([[0, 1], [1, 0]]), _sched())
    lines = path.read_text().splitlines()
    bad = json.loads(lines[1])
    bad["key"] = "0" * 64
    path.write_text("\n".join([lines[0], json.dumps(bad), lines[2], "{not json"]) + "\n")
    lib = PulseLibrary(path)
    assert len(lib) == 1 and lib.corrupt == 2


def test_bad_header(tmp_path):
    path = tmp_path / "lib.jsonl"
    path.write_text('{"format_version": 99}\n')
    with pytest.raises(LibraryError):
        PulseLibrary(path)


def test_quantization_boundary_never_wrong_hit():
    # a matrix entry on a rounding midpoint: tiny perturbations may flip the key
    # (a miss is fine) but a hit must always be within 1e-6 of the stored matrix
    rng = np.random.default_rng(5)
    lib = PulseLibrary()
    for _ in range(20):
        theta = 2 * np.arccos(round(np.cos(rng.uniform(0, 1)), 6) + 0.5e-6)
        u = np.array([[np.cos(theta / 2), -np.sin(theta / 2)], [np.sin(theta / 2), np.cos(theta / 2)]])
        lib.insert(u, _sched())
        for eps in (1e-9, -1e-9, 3e-7, 0.3):
            c, s_ = np.cos(theta / 2 + eps), np.sin(theta / 2 + eps)
            v = np.array([[c, -s_], [s_, c]])
            if lib.lookup(v) is not None:
                stored = {e.key: e for e in lib.entries()}[canonical_key(v)].matrix
                assert linalg.dist(stored, v) <= 1e-6
