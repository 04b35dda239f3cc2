"""Regroup synthesized VUG/CX gates into medium-size unitaries and schedule pulses."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import linalg
from .ir import Circuit


@dataclass(frozen=True)
class GroupedUnitary:
    qubits: tuple[int, ...]
    matrix: np.ndarray
    source_gates: tuple[int, ...]

    @property
    def key(self) -> str:
        from .pulselib import canonical_key

        return canonical_key(self.matrix)


@dataclass(frozen=True)
class ScheduledPulse:
    group: GroupedUnitary
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


def _group_matrix(c: Circuit, qubits: tuple[int, ...], gate_ids) -> np.ndarray:
    local = {q: j for j, q in enumerate(qubits)}
    u = np.eye(2 ** len(qubits), dtype=complex)
    for i in gate_ids:
        g = c.gates[i]
        u = linalg.apply_on(u, g.matrix(), [local[q] for q in g.qubits], len(qubits))
    return u


def regroup(c: Circuit, limit: int = 3) -> list[GroupedUnitary]:
    """Greedy left-to-right merge of gates into groups of at most ``limit`` qubits.

    A gate may join a group only if, on each of its qubits, the last gate seen
    belongs to that same group (or there was none); among such groups the most
    recently opened one whose qubit union fits the limit wins.
    """
    if limit < 2:
        raise ValueError("regroup limit must be at least 2")
    members: list[list[int]] = []
    qsets: list[set[int]] = []
    last: dict[int, int] = {}
    for i, g in enumerate(c.gates):
        owners = {last[q] for q in g.qubits if q in last}
        chosen = None
        if len(owners) <= 1:
            candidates = owners if owners else range(len(members) - 1, -1, -1)
            for gi in candidates:
                if len(qsets[gi] | set(g.qubits)) <= limit:
                    chosen = gi
                    break
        if chosen is None:
            members.append([])
            qsets.append(set())
            chosen = len(members) - 1
        members[chosen].append(i)
        qsets[chosen].update(g.qubits)
        for q in g.qubits:
            last[q] = chosen
    out = []
    for ids, qs in zip(members, qsets):
        qubits = tuple(sorted(qs))
        out.append(GroupedUnitary(qubits, _group_matrix(c, qubits, ids), tuple(ids)))
    return out


def per_gate_groups(c: Circuit) -> list[GroupedUnitary]:
    """One group per gate: the no-grouping arm."""
    out = []
    for i, g in enumerate(c.gates):
        qubits = tuple(sorted(g.qubits))
        out.append(GroupedUnitary(qubits, _group_matrix(c, qubits, [i]), (i,)))
    return out


def reconstruct(groups: list[GroupedUnitary], n_qubits: int) -> np.ndarray:
    u = np.eye(2**n_qubits, dtype=complex)
    for grp in groups:
        u = linalg.apply_on(u, grp.matrix, list(grp.qubits), n_qubits)
    return u


def schedule(groups: list[GroupedUnitary], durations) -> tuple[list[ScheduledPulse], float]:
    """ASAP schedule in list order; ``durations[i]`` is the pulse length of ``groups[i]``.

    ``durations`` may be a sequence indexed like ``groups`` or a mapping keyed
    by group index.
    """
    free: dict[int, float] = {}
    pulses = []
    for i, grp in enumerate(groups):
        try:
            dur = float(durations[i])
        except (KeyError, IndexError):
            raise KeyError(f"no duration for group {i} on qubits {grp.qubits}") from None
        start = max((free.get(q, 0.0) for q in grp.qubits), default=0.0)
        pulses.append(ScheduledPulse(grp, start, dur))
        for q in grp.qubits:
            free[q] = start + dur
    total = max((p.end for p in pulses), default=0.0)
    return pulses, total


def dump_schedule(pulses: list[ScheduledPulse]) -> str:
    return json.dumps([
        {"qubits": list(p.group.qubits), "start_ns": p.start, "duration_ns": p.duration, "key": p.group.key}
        for p in pulses
    ])
