"""Service-level objective value types and the (sum, min) composition operator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

DEFAULT_EPS = 1e-6


@dataclass(frozen=True)
class SloVector:
    """A (delay, throughput) objective pair.

    ``delay_ms`` is an upper bound on latency, ``throughput_gbps`` a lower
    bound on rate. Smaller delay and larger throughput make an SLO stricter.
    """

    delay_ms: float
    throughput_gbps: float

    def __post_init__(self):
        for name in ("delay_ms", "throughput_gbps"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value!r}")
        object.__setattr__(self, "delay_ms", float(self.delay_ms))
        object.__setattr__(self, "throughput_gbps", float(self.throughput_gbps))

    def as_tuple(self) -> tuple[float, float]:
        return (self.delay_ms, self.throughput_gbps)


@dataclass(frozen=True)
class Decomposition:
    """Per-domain partial SLOs, one entry per domain in domain order."""

    partials: tuple[SloVector, ...]

    def __init__(self, partials: Iterable[SloVector]):
        partials = tuple(partials)
        if not partials:
            raise ValueError("a decomposition needs at least one domain")
        for p in partials:
            if not isinstance(p, SloVector):
                raise TypeError(f"expected SloVector, got {type(p).__name__}")
        object.__setattr__(self, "partials", partials)

    def __len__(self):
        return len(self.partials)

    def __iter__(self):
        return iter(self.partials)

    def __getitem__(self, i):
        return self.partials[i]

    @property
    def delays(self) -> tuple[float, ...]:
        return tuple(p.delay_ms for p in self.partials)

    @classmethod
    def from_delays(cls, delays: Sequence[float], throughput_gbps: float) -> "Decomposition":
        return cls(SloVector(float(d), throughput_gbps) for d in delays)


def compose(d: Decomposition | Sequence[SloVector]) -> SloVector:
    """End-to-end SLO implied by partials: delays add, throughput is the minimum."""
    partials = tuple(d)
    if not partials:
        raise ValueError("cannot compose an empty decomposition")
    return SloVector(
        math.fsum(p.delay_ms for p in partials),
        min(p.throughput_gbps for p in partials),
    )


def is_valid_for(d: Decomposition | Sequence[SloVector], target: SloVector, eps: float = DEFAULT_EPS) -> bool:
    if eps <= 0:
        raise ValueError("eps must be positive")
    partials = tuple(d)
    if not partials:
        return False
    total = math.fsum(p.delay_ms for p in partials)
    if abs(total - target.delay_ms) > eps:
        return False
    return min(p.throughput_gbps for p in partials) >= target.throughput_gbps - eps


def strictness_leq(a: SloVector, b: SloVector) -> bool:
    """True when ``a`` is at least as strict as ``b``."""
    return a.delay_ms <= b.delay_ms and a.throughput_gbps >= b.throughput_gbps
