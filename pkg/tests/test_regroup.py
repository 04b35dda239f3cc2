import json

import numpy as np
import pytest

from pulsecomp import ir, linalg, synth
from pulsecomp.ir import Circuit, Gate
from pulsecomp.regroup import GroupedUnitary, dump_schedule, per_gate_groups, reconstruct, regroup, schedule


def _vug(q, *p):
    return Gate("VUG", (q,), p or (0.3, 0.2, 0.1))


def _grp(qubits):
    return GroupedUnitary(tuple(qubits), np.eye(2 ** len(qubits)), ())


def test_single_gate():
    c = Circuit(2, [Gate("CX", (0, 1))])
    (g,) = regroup(c, 3)
    assert g.qubits == (0, 1) and g.source_gates == (0,)
    assert np.allclose(g.matrix, ir.gate_matrix("CX"))


def test_limit_must_be_two():
    with pytest.raises(ValueError):
        regroup(Circuit(1, []), 1)


def test_whole_block_merges():
    # VUG/CX run on two qubits collapses into one unitary
    c = Circuit(2, [_vug(0), _vug(1), Gate("CX", (0, 1)), _vug(0), _vug(1), Gate("CX", (1, 0)), _vug(1)])
    groups = regroup(c, 2)
    assert len(groups) == 1
    assert linalg.dist(groups[0].matrix, c.unitary()) <= 1e-8


def test_limit_splits():
    c = Circuit(3, [Gate("CX", (0, 1)), Gate("CX", (1, 2)), Gate("CX", (0, 1))])
    assert [g.qubits for g in regroup(c, 2)] == [(0, 1), (1, 2), (0, 1)]
    assert [g.qubits for g in regroup(c, 3)] == [(0, 1, 2)]


def test_blocking_rule():
    # the last CX cannot rejoin group 0 since q1's latest gate belongs to group 1
    c = Circuit(3, [Gate("CX", (0, 1)), Gate("CX", (1, 2)), _vug(0), Gate("CX", (0, 1))])
    groups = regroup(c, 2)
    assert [g.source_gates for g in groups] == [(0, 2), (1,), (3,)]
    assert linalg.dist(reconstruct(groups, 3), c.unitary()) <= 1e-8


def test_reconstruction_random():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(2, 5))
        c = synth.transcribe(ir.random_circuit(n, 25, rng))
        for limit in (2, 3, 4):
            groups = regroup(c, limit)
            assert sorted(i for g in groups for i in g.source_gates) == list(range(len(c)))
            assert all(len(g.qubits) <= limit for g in groups)
            assert linalg.dist(reconstruct(groups, n), c.unitary()) <= 1e-8
        assert len(per_gate_groups(c)) == len(c)
        assert linalg.dist(reconstruct(per_gate_groups(c), n), c.unitary()) <= 1e-8


def test_raw_unitary_joins():
    u = linalg.random_unitary(4, np.random.default_rng(1))
    c = Circuit(3, [Gate.raw(u, (0, 2)), _vug(2), _vug(1)])
    groups = regroup(c, 3)
    assert len(groups) == 1
    assert linalg.dist(reconstruct(groups, 3), c.unitary()) <= 1e-8


def test_schedule_fixtures():
    _, total = schedule([_grp([0]), _grp([1])], [100, 80])
    assert total == 100
    _, total = schedule([_grp([0, 1]), _grp([1])], [100, 80])
    assert total == 180
    _, total = schedule([_grp([2])] * 5, [7] * 5)
    assert total == 35
    pulses, total = schedule([], [])
    assert pulses == [] and total == 0


def test_schedule_mapping_and_missing():
    groups = [_grp([0]), _grp([0, 1])]
    pulses, total = schedule(groups, {0: 5, 1: 10})
    assert [(p.start, p.end) for p in pulses] == [(0, 5), (5, 15)]
    with pytest.raises(KeyError):
        schedule(groups, {0: 5})


def test_schedule_no_overlap():
    rng = np.random.default_rng(2)
    groups = [_grp(sorted(rng.choice(4, size=int(rng.integers(1, 3)), replace=False))) for _ in range(30)]
    durs = rng.integers(1, 50, size=30)
    pulses, total = schedule(groups, durs)
    for i, a in enumerate(pulses):
        for b in pulses[i + 1:]:
            if set(a.group.qubits) & set(b.group.qubits):
                # later pulse on a shared qubit starts after the earlier one ends
                assert b.start >= a.end
    assert total == max(p.end for p in pulses)


def test_dump_schedule():
    c = Circuit(2, [Gate("CX", (0, 1))])
    pulses, _ = schedule(regroup(c), [12])
    (rec,) = json.loads(dump_schedule(pulses))
    assert rec["qubits"] == [0, 1] and rec["start_ns"] == 0 and rec["duration_ns"] == 12
    assert len(rec["key"]) == 64
