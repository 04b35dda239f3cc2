"""Greedy circuit partitioning into blocks of bounded qubit count and size.

Qubits are first grouped along the interaction graph (horizontal cut), then
gates are streamed into per-group blocks until each block hits its gate
budget (vertical cut). A two-qubit gate whose qubits fall in different
groups becomes a bridging block of its own.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import linalg
from .ir import Circuit, Gate


@dataclass(frozen=True)
class PartitionConfig:
    qubit_limit: int = 3
    gate_limit: int = 64

    def __post_init__(self):
        if not 2 <= self.qubit_limit <= 8:
            raise ValueError("qubit_limit must lie in [2, 8]")
        if self.gate_limit < 1:
            raise ValueError("gate_limit must be positive")


@dataclass(frozen=True)
class Block:
    qubits: tuple[int, ...]
    sub: Circuit
    origin: tuple[int, ...]

    def unitary(self) -> np.ndarray:
        return self.sub.unitary()

    def to_dict(self) -> dict:
        return {"qubits": list(self.qubits), "gate_indices": list(self.origin)}


def interaction_counts(c: Circuit) -> Counter:
    counts: Counter = Counter()
    for g in c.gates:
        if len(g.qubits) >= 2:
            for i, a in enumerate(g.qubits):
                for b in g.qubits[i + 1:]:
                    counts[frozenset((a, b))] += 1
    return counts


def group_qubits(c: Circuit, cfg: PartitionConfig = PartitionConfig()) -> list[frozenset[int]]:
    counts = interaction_counts(c)
    unassigned = set(range(c.n_qubits))
    groups = []
    while unassigned:
        seed = min(unassigned)
        group = {seed}
        unassigned.discard(seed)
        while len(group) < cfg.qubit_limit:
            score = Counter()
            for q in unassigned:
                s = sum(counts.get(frozenset((q, m)), 0) for m in group)
                if s:
                    score[q] = s
            if not score:
                break
            best = min(score, key=lambda q: (-score[q], q))
            group.add(best)
            unassigned.discard(best)
        groups.append(frozenset(group))
    return groups


def _make_block(c: Circuit, origin: list[int]) -> Block:
    qs = sorted({q for i in origin for q in c.gates[i].qubits})
    local = {q: j for j, q in enumerate(qs)}
    sub = Circuit(len(qs), [c.gates[i].remap(local) for i in origin])
    return Block(tuple(qs), sub, tuple(origin))


def partition(c: Circuit, cfg: PartitionConfig = PartitionConfig()) -> list[Block]:
    """Blocks in a dependency-respecting order (the order they are sealed)."""
    groups = group_qubits(c, cfg)
    owner = {q: gi for gi, grp in enumerate(groups) for q in grp}
    open_blocks: dict[int, list[int]] = {}
    blocks: list[Block] = []

    def seal(gi):
        origin = open_blocks.pop(gi, None)
        if origin:
            blocks.append(_make_block(c, origin))

    for i, g in enumerate(c.gates):
        gis = {owner[q] for q in g.qubits}
        if len(gis) == 1:
            gi = gis.pop()
            cur = open_blocks.get(gi)
            if cur is not None and len(cur) >= cfg.gate_limit:
                seal(gi)
                cur = None
            if cur is None:
                open_blocks[gi] = cur = []
            cur.append(i)
        else:
            for gi in sorted(gis):
                seal(gi)
            blocks.append(_make_block(c, [i]))
    for gi in sorted(open_blocks):
        seal(gi)
    return blocks


def reconstruct(blocks: list[Block], n_qubits: int) -> np.ndarray:
    """Multiply block unitaries back together in list order."""
    u = np.eye(2**n_qubits, dtype=complex)
    for b in blocks:
        u = linalg.apply_on(u, b.unitary(), list(b.qubits), n_qubits)
    return u


def dump(blocks: list[Block]) -> str:
    return json.dumps([b.to_dict() for b in blocks])


def flatten(blocks: list[Block], n_qubits: int) -> Circuit:
    gates: list[Gate] = []
    for b in blocks:
        gates.extend(g.remap(b.qubits) for g in b.sub.gates)
    return Circuit(n_qubits, gates)
