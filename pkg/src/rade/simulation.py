"""Ground-truth domain environment.

Each domain accepts a partial SLO with a closed-form probability whose
load-dependence enters only through the effective form factor
``alpha / lambda_t``. Traffic intensity follows one sine period over the
episode, request counts are Poisson, and feedback is Bernoulli with optional
label corruption (a corrupted sample always reads as a rejection).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .slo import SloVector
from .utils.validation import check_positive, check_unit_interval

# period mean of the traffic factor; keeps the configured arrival rate equal to
# the time-averaged Poisson mean
TRAFFIC_MEAN = 0.55

REQUEST_DELAY_RANGE_MS = (90.0, 110.0)
REQUEST_THROUGHPUT_RANGE_GBPS = (0.4, 0.6)


@dataclass(frozen=True)
class AnalyticDomainModel:
    alpha: float = 1.0
    tau_ref_ms: float = 35.0
    theta_ref_gbps: float = 2.0

    def __post_init__(self):
        check_positive(self.alpha, "alpha")
        check_positive(self.tau_ref_ms, "tau_ref_ms")
        check_positive(self.theta_ref_gbps, "theta_ref_gbps")


# theta_ref = 2 Gbps keeps the throughput factor from dominating: at 0.5 Gbps
# three domains at peak load leave even the optimal split near 0.1
DEFAULT_DOMAINS = (
    AnalyticDomainModel(1.0, 35.0, 2.0),
    AnalyticDomainModel(1.2, 35.0, 2.0),
    AnalyticDomainModel(0.8, 35.0, 2.0),
)


@dataclass(frozen=True)
class TrafficProcess:
    total_steps: int = 400
    arrival_scale: float = 0.5

    def __post_init__(self):
        check_positive(self.total_steps, "total_steps", integer=True, allow_zero=True)
        check_positive(self.arrival_scale, "arrival_scale", allow_zero=True)


@dataclass(frozen=True)
class CorruptionConfig:
    p_c: float = 0.0

    def __post_init__(self):
        check_unit_interval(self.p_c, "p_c")


def traffic_factor(proc: TrafficProcess, t: int) -> float:
    """Traffic intensity in [0.1, 1.0]; one sine period over ``total_steps``."""
    if not 0 <= t < proc.total_steps:
        raise ValueError(f"time step {t} outside [0, {proc.total_steps})")
    return 0.5 * (math.sin(2.0 * math.pi * t / proc.total_steps) + 1.0) * 0.9 + 0.1


def acceptance_prob(m: AnalyticDomainModel, s: SloVector, lambda_t: float) -> float:
    return float(acceptance_prob_array(m, s.delay_ms, s.throughput_gbps, lambda_t))


def acceptance_prob_array(m: AnalyticDomainModel, delay_ms, throughput_gbps, lambda_t):
    """Vectorised acceptance probability over arrays of delays and throughputs."""
    lambda_t = np.asarray(lambda_t, dtype=np.float64)
    if not np.all(lambda_t > 0):
        raise ValueError(f"lambda_t must be positive, got {lambda_t!r}")
    alpha_eff = m.alpha / lambda_t
    delay_ms = np.asarray(delay_ms, dtype=np.float64)
    throughput_gbps = np.asarray(throughput_gbps, dtype=np.float64)
    delay_term = -np.expm1(-alpha_eff * delay_ms / m.tau_ref_ms)
    return delay_term * np.exp(-throughput_gbps / (alpha_eff * m.theta_ref_gbps))


def sample_arrivals(proc: TrafficProcess, t: int, rng: np.random.Generator) -> int:
    lam = proc.arrival_scale * traffic_factor(proc, t) / TRAFFIC_MEAN
    return int(rng.poisson(lam))


def sample_request(rng: np.random.Generator) -> SloVector:
    delay = rng.uniform(*REQUEST_DELAY_RANGE_MS)
    throughput = rng.uniform(*REQUEST_THROUGHPUT_RANGE_GBPS)
    return SloVector(delay, throughput)


def feedback(m: AnalyticDomainModel, s: SloVector, lambda_t: float, corr: CorruptionConfig,
             rng: np.random.Generator) -> tuple[bool, bool]:
    """Return ``(accepted, corrupted)``.

    Both uniforms are always drawn so the random stream does not depend on
    the outcome.
    """
    u_accept, u_corrupt = rng.random(2)
    accepted = bool(u_accept < acceptance_prob(m, s, lambda_t))
    corrupted = bool(u_corrupt < corr.p_c)
    if corrupted:
        accepted = False
    return accepted, corrupted
