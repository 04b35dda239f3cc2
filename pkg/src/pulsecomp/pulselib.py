"""Persistent pulse library keyed by phase-canonical unitary fingerprints.

On disk: JSON lines. The first line is a header ``{"format_version": 1}``;
every further line is one entry ``{key, matrix, schedule, created_at}``.
The file is append-only; when a key appears more than once, the entry with
the shortest pulse wins at load time.
"""
from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import linalg
from .qoc import PulseSchedule

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
QUANTUM = 1e-6
VERIFY_DIST = 1e-6


class LibraryError(RuntimeError):
    pass


def canonical_key(u: np.ndarray) -> str:
    """sha256 over the phase-canonicalized matrix quantized to 1e-6."""
    c = linalg.phase_canonicalize(np.asarray(u, dtype=complex))
    q = np.rint(np.stack([c.real, c.imag], axis=-1) / QUANTUM).astype(np.int64)
    h = hashlib.sha256()
    h.update(f"{c.shape[0]}:".encode())
    h.update(q.astype("<i8").tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class LibraryEntry:
    key: str
    matrix: np.ndarray
    schedule: PulseSchedule
    created_at: str

    def to_json(self) -> str:
        return json.dumps({
            "key": self.key,
            "matrix": linalg.to_pairs(self.matrix),
            "schedule": self.schedule.to_dict(),
            "created_at": self.created_at,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "LibraryEntry":
        data = json.loads(line)
        return cls(data["key"], linalg.from_pairs(data["matrix"]),
                   PulseSchedule.from_dict(data["schedule"]), data["created_at"])


class PulseLibrary:
    """In-memory index over an optional JSON-lines file.

    Reads take a snapshot of the index; writes go through one lock so the file
    sees whole lines in insertion order.
    """

    def __init__(self, path=None, admission_threshold: float = 0.999):
        self.path = Path(path) if path is not None else None
        self.admission_threshold = admission_threshold
        self._index: dict[str, LibraryEntry] = {}
        self._lock = threading.Lock()
        self.corrupt = 0
        if self.path is not None and self.path.exists() and self.path.stat().st_size:
            self._load()

    def _load(self) -> None:
        with open(self.path) as fh:
            header = fh.readline()
            try:
                version = json.loads(header).get("format_version")
            except (json.JSONDecodeError, AttributeError):
                raise LibraryError(f"{self.path}: missing or unreadable header") from None
            if version != FORMAT_VERSION:
                raise LibraryError(f"{self.path}: unsupported format_version {version}")
            for lineno, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                try:
                    entry = LibraryEntry.from_json(line)
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    log.warning("%s:%d: unreadable entry skipped (%s)", self.path, lineno, exc)
                    self.corrupt += 1
                    continue
                if canonical_key(entry.matrix) != entry.key:
                    log.warning("%s:%d: stored key does not match its matrix; entry skipped", self.path, lineno)
                    self.corrupt += 1
                    continue
                self._keep(entry)

    def _keep(self, entry: LibraryEntry) -> bool:
        cur = self._index.get(entry.key)
        if cur is not None and cur.schedule.duration <= entry.schedule.duration:
            return False
        self._index[entry.key] = entry
        return True

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, u) -> bool:
        return self.lookup(u) is not None

    def entries(self) -> list[LibraryEntry]:
        return list(self._index.values())

    def lookup(self, u: np.ndarray) -> PulseSchedule | None:
        entry = self._index.get(canonical_key(u))
        if entry is None:
            return None
        if linalg.dist(entry.matrix, u) > VERIFY_DIST:
            return None
        return entry.schedule

    def insert(self, u: np.ndarray, schedule: PulseSchedule) -> None:
        if schedule.fidelity < self.admission_threshold:
            raise LibraryError(
                f"schedule fidelity {schedule.fidelity:.6f} below admission threshold {self.admission_threshold}")
        u = np.asarray(u, dtype=complex)
        key = canonical_key(u)
        entry = LibraryEntry(key, u, schedule, datetime.now(timezone.utc).isoformat())
        with self._lock:
            if not self._keep(entry):
                return
            if self.path is not None:
                self._append(entry)

    def _append(self, entry: LibraryEntry) -> None:
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a") as fh:
                if fresh:
                    fh.write(json.dumps({"format_version": FORMAT_VERSION}) + "\n")
                fh.write(entry.to_json() + "\n")
        except OSError as exc:
            raise LibraryError(f"cannot write pulse library {self.path}: {exc}") from exc

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
