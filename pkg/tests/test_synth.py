import json

import numpy as np
import pytest

from pulsecomp import ir, linalg, synth
from pulsecomp.ir import Circuit, Gate
from pulsecomp.synth import SynthConfig, SynthNode


def _rebuilt_dist(target, circuit):
    # independent reconstruction from the emitted gates
    u = np.eye(target.shape[0], dtype=complex)
    for g in circuit.gates:
        u = linalg.embed(ir.gate_matrix(g.kind, g.params, len(g.qubits)), g.qubits, circuit.n_qubits) @ u
    return linalg.dist(target, u)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(success_threshold=0)
    with pytest.raises(ValueError):
        SynthConfig(heuristic_weight=-1)


def test_single_qubit_targets():
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = linalg.random_unitary(2, rng)
        r = synth.synthesize(u)
        assert r.success and r.cnot_count == 0
        assert [g.kind for g in r.circuit.gates] == ["VUG"]
        assert _rebuilt_dist(u, r.circuit) <= 1e-8


def test_cx_one_cnot():
    r = synth.synthesize(ir.gate_matrix("CX"))
    assert r.success and r.cnot_count == 1
    assert _rebuilt_dist(ir.gate_matrix("CX"), r.circuit) <= 1e-8


def test_swap_three_cnots():
    swap = np.eye(4)[[0, 2, 1, 3]]
    r = synth.synthesize(swap)
    assert r.success and r.cnot_count == 3
    assert {g.kind for g in r.circuit.gates} <= {"VUG", "CX"}
    assert _rebuilt_dist(swap, r.circuit) <= 1e-8


def test_random_su4_bound():
    rng = np.random.default_rng(1)
    for _ in range(5):
        u = linalg.random_unitary(4, rng)
        r = synth.synthesize(u)
        assert r.success and r.cnot_count <= 3
        assert r.final_dist <= 1e-8
        assert _rebuilt_dist(u, r.circuit) <= 1e-8


def test_expand_counts():
    root = SynthNode(synth.root_template(2), np.zeros(6), 1.0, 0, 10.0)
    kids = synth.expand_node(root, SynthConfig())
    assert len(kids) == 2
    assert [k.template.gates[-3] for k in kids] == [Gate("CX", (0, 1)), Gate("CX", (1, 0))]
    root3 = SynthNode(synth.root_template(3), np.zeros(9), 1.0, 2, 12.0)
    kids3 = synth.expand_node(root3, SynthConfig(coupling=((0, 1), (1, 2))))
    assert len(kids3) == 4
    assert all(k.g == 3 for k in kids3)
    assert all(len(k.params) == 3 * sum(g.kind == "VUG" for g in k.template.gates) for k in kids3)


def test_expand_scores_children():
    target = ir.gate_matrix("CX")
    root = SynthNode(synth.root_template(2), np.zeros(6), 1.0, 0, 10.0)
    cfg = SynthConfig()
    for k in synth.expand_node(root, cfg, target):
        assert k.f == pytest.approx(k.g + cfg.heuristic_weight * k.achieved_dist)
        assert k.achieved_dist <= 1e-8


def test_instantiate_fixtures():
    tmpl = synth.root_template(1)
    params, d = synth.instantiate(tmpl, ir.rz(0.7))
    assert d <= 1e-8
    # CX . CX = I, so the identity is reachable with every VUG at the identity
    vugs = synth.root_template(2).gates
    tmpl2 = Circuit(2, vugs + (Gate("CX", (0, 1)),) + vugs + (Gate("CX", (0, 1)),) + vugs)
    params, d = synth.instantiate(tmpl2, np.eye(4))
    assert d <= 1e-8
    assert np.allclose(params, 0)


def test_instantiate_never_worse_than_warm_start():
    rng = np.random.default_rng(2)
    target = linalg.random_unitary(4, rng)
    tmpl = Circuit(2, synth.root_template(2).gates + (Gate("CX", (0, 1)),) + synth.root_template(2).gates)
    warm = rng.uniform(-np.pi, np.pi, 12)
    warm_d = linalg.dist(target, synth._bake(tmpl, warm).unitary())
    _, d = synth.instantiate(tmpl, target, SynthConfig(optimizer_restarts=1), warm_start=warm)
    assert d <= warm_d + 1e-15


def test_instantiate_needs_vug():
    with pytest.raises(ValueError):
        synth.instantiate(Circuit(2, [Gate("CX", (0, 1))]), np.eye(4))


def test_objective_gradient():
    rng = np.random.default_rng(3)
    tmpl = Circuit(3, synth.root_template(3).gates + (Gate("CX", (2, 0)), Gate("VUG", (2,), (0, 0, 0))))
    obj = synth._Objective(tmpl, linalg.random_unitary(8, rng))
    x = rng.uniform(-np.pi, np.pi, 12)
    _, g = obj(x)
    eps = 1e-6
    fd = np.array([(obj(x + eps * e)[0] - obj(x - eps * e)[0]) / (2 * eps) for e in np.eye(12)])
    assert np.abs(fd - g).max() <= 1e-6 * max(1.0, np.abs(g).max())


def test_heap_order_in_trace(tmp_path):
    path = tmp_path / "trace.jsonl"
    r = synth.synthesize(linalg.random_unitary(4, np.random.default_rng(4)), trace_path=path)
    recs = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(recs) == len(r.trace) and recs
    assert set(recs[0]) >= {"f", "g", "dist", "gate_count"}
    for rec in recs:
        if rec["open_min_f"] is not None:
            assert rec["f"] <= rec["open_min_f"] + 1e-12


def test_deterministic():
    u = linalg.random_unitary(4, np.random.default_rng(5))
    a = synth.synthesize(u, SynthConfig(seed=3))
    b = synth.synthesize(u, SynthConfig(seed=3))
    assert a.circuit == b.circuit


def test_budget_exhaustion_is_flagged():
    u = linalg.random_unitary(8, np.random.default_rng(6))
    r = synth.synthesize(u, SynthConfig(max_expansions=1, optimizer_restarts=1))
    assert not r.success
    assert r.final_dist > 1e-8
    assert r.expansions == 1


def test_rejects_large_targets():
    with pytest.raises(ValueError):
        synth.synthesize(np.eye(32))


def test_transcribe_exact():
    rng = np.random.default_rng(7)
    for n in (2, 3, 4):
        c = ir.random_circuit(n, 25, rng)
        t = synth.transcribe(c)
        assert {g.kind for g in t.gates} <= {"VUG", "CX"}
        assert t.cx_count() == c.cx_count()
        assert linalg.dist(t.unitary(), c.unitary()) <= 1e-10


def test_block_depth_not_increased():
    # 2-qubit block with redundant single-qubit layers: depth 12 in, 5 out
    c = Circuit(2, [Gate("H", (0,)), Gate("T", (1,)), Gate("CX", (0, 1)), Gate("S", (0,)), Gate("RZ", (1,), (0.4,)),
                    Gate("H", (1,)), Gate("CX", (1, 0)), Gate("T", (0,)), Gate("SX", (1,)), Gate("CX", (0, 1)),
                    Gate("H", (0,)), Gate("X", (1,)), Gate("CX", (1, 0)), Gate("Z", (0,)), Gate("S", (1,)),
                    Gate("CX", (0, 1)), Gate("T", (1,))])
    r = synth.synthesize(c.unitary())
    assert r.success
    assert r.circuit.depth() <= c.depth()
    assert r.cnot_count <= 3
