"""Feedback samples and the bounded FIFO buffer that feeds online updates."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .slo import SloVector


@dataclass(frozen=True)
class FeedbackSample:
    domain_id: int
    slo: SloVector
    accepted: bool
    time_step: int
    corrupted: bool = False

    def __post_init__(self):
        if self.domain_id < 0:
            raise ValueError("domain_id must be non-negative")
        if self.time_step < 0:
            raise ValueError("time_step must be non-negative")


class FifoBuffer:
    """Keeps the newest ``capacity`` samples in arrival order."""

    def __init__(self, capacity: int, items: Iterable[FeedbackSample] = ()):
        if isinstance(capacity, bool) or not isinstance(capacity, (int, np.integer)) or capacity < 1:
            raise ValueError(f"capacity must be a positive integer, got {capacity!r}")
        self.capacity = int(capacity)
        self._items = deque(items, maxlen=self.capacity)

    def __len__(self):
        return len(self._items)

    def __repr__(self):
        return f"FifoBuffer(capacity={self.capacity}, len={len(self)})"

    def push_batch(self, batch: Iterable[FeedbackSample]) -> "FifoBuffer":
        # deque(maxlen) drops from the left as new items arrive on the right
        self._items.extend(batch)
        return self

    def clear(self):
        self._items.clear()

    def snapshot(self) -> tuple[FeedbackSample, ...]:
        return tuple(self._items)


def push_batch(buf: FifoBuffer, batch: Iterable[FeedbackSample]) -> FifoBuffer:
    return buf.push_batch(batch)


def snapshot(buf: FifoBuffer) -> tuple[FeedbackSample, ...]:
    return buf.snapshot()


def to_training_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into ``(X, y)`` for the risk model."""
    X = np.array([s.slo.as_tuple() for s in samples], dtype=np.float64).reshape(-1, 2)
    y = np.array([1.0 if s.accepted else 0.0 for s in samples])
    return X, y


class FeedbackLog:
    """Append-only JSON-lines record of every pushed feedback sample."""

    FIELDS = ("time_step", "domain_id", "delay_ms", "throughput_gbps", "accepted", "corrupted")

    def __init__(self, path):
        self.path = Path(path)
        self._fh = self.path.open("a", encoding="utf-8")

    def write(self, samples: Iterable[FeedbackSample]):
        for s in samples:
            rec = {
                "time_step": s.time_step,
                "domain_id": s.domain_id,
                "delay_ms": s.slo.delay_ms,
                "throughput_gbps": s.slo.throughput_gbps,
                "accepted": bool(s.accepted),
                "corrupted": bool(s.corrupted),
            }
            self._fh.write(json.dumps(rec) + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_feedback_log(path) -> list[FeedbackSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            r = json.loads(line)
            out.append(FeedbackSample(r["domain_id"], SloVector(r["delay_ms"], r["throughput_gbps"]),
                                      r["accepted"], r["time_step"], r["corrupted"]))
    return out
