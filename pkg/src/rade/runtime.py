"""Episode loop: learn from last step's feedback, then decompose this step's requests.

All randomness is drawn from generators keyed by ``(seed, stream, t, ...)``
so every method run under one seed sees the same arrivals, requests and
feedback noise.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .decomposer import DecomposerConfig, decompose, decompose_opt, decompose_random
from .memory import FeedbackLog, FeedbackSample, FifoBuffer, to_training_arrays
from .risk_model import OgdConfig, RiskModelParams, run_epochs, train_to_convergence
from .simulation import (
    DEFAULT_DOMAINS,
    AnalyticDomainModel,
    CorruptionConfig,
    TrafficProcess,
    acceptance_prob,
    feedback,
    sample_arrivals,
    sample_request,
    traffic_factor,
)
from .slo import Decomposition

log = logging.getLogger(__name__)

_STREAM_ARRIVALS = 1
_STREAM_REQUEST = 2
_STREAM_SPLIT = 3
_STREAM_FEEDBACK = 4
_STREAM_LEARN = 5
_STREAM_INIT = 6

# offset between an episode seed and the seed of its Static warm-up run
WARMUP_SEED_OFFSET = 1_000_003
# online passes use batch statistics when a minibatch has enough samples and
# fall back to running statistics otherwise
ONLINE_BN_MODE = "train"


class ConfigError(ValueError):
    """Inconsistent or malformed experiment configuration."""


class InsufficientDataError(RuntimeError):
    pass


class NoDataError(ValueError):
    pass


class MethodKind(str, Enum):
    RANDOM = "random"
    STATIC = "static"
    RADE_STAR = "rade_star"
    RADE = "rade"
    OPT = "opt"

    @classmethod
    def parse(cls, value) -> "MethodKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace("*", "_star")
        aliases = {"radestar": "rade_star", "rade_star": "rade_star"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ConfigError(f"unknown method {value!r}; expected one of {names}") from None

    @property
    def uses_models(self) -> bool:
        return self in (MethodKind.STATIC, MethodKind.RADE_STAR, MethodKind.RADE)

    @property
    def learns_online(self) -> bool:
        return self in (MethodKind.RADE_STAR, MethodKind.RADE)


@dataclass(frozen=True)
class StaticWarmup:
    epochs: int = 700
    warmup_seed: Optional[int] = None
    step_size: Optional[float] = None
    # Rade starts with the warm-up feedback in its buffers
    prefill_buffer: bool = True


@dataclass(frozen=True)
class EpisodeConfig:
    method: MethodKind = MethodKind.RADE
    domains: tuple[AnalyticDomainModel, ...] = DEFAULT_DOMAINS
    traffic: TrafficProcess = TrafficProcess()
    corruption: CorruptionConfig = CorruptionConfig()
    ogd: OgdConfig = OgdConfig()
    buffer_capacity: int = 512
    decomposer: DecomposerConfig = DecomposerConfig()
    seed: int = 0
    static_warmup: StaticWarmup = StaticWarmup()
    verbose: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", MethodKind.parse(self.method))
        object.__setattr__(self, "domains", tuple(self.domains))
        if not self.domains:
            raise ConfigError("at least one domain is required")
        if isinstance(self.buffer_capacity, bool) or not isinstance(self.buffer_capacity, int) \
                or self.buffer_capacity < 1:
            raise ConfigError(f"buffer_capacity must be a positive integer, got {self.buffer_capacity!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.static_warmup.epochs < 0:
            raise ConfigError("static_warmup.epochs must be non-negative")

    def replace(self, **changes) -> "EpisodeConfig":
        return dataclasses.replace(self, **changes)

    @property
    def n_domains(self) -> int:
        return len(self.domains)

    @property
    def static_ogd(self) -> OgdConfig:
        """OGD settings for Static training; may override the online step size."""
        if self.static_warmup.step_size is None:
            return self.ogd
        return dataclasses.replace(self.ogd, step_size=self.static_warmup.step_size)

    @property
    def warmup_seed(self) -> int:
        ws = self.static_warmup.warmup_seed
        return self.seed + WARMUP_SEED_OFFSET if ws is None else ws


@dataclass(frozen=True)
class StepRecord:
    t: int
    lambda_t: float
    e2e_probs: tuple[float, ...]
    decompositions: Optional[tuple[Decomposition, ...]] = None

    @property
    def m_t(self) -> int:
        return len(self.e2e_probs)

    @property
    def sum_e2e_prob(self) -> float:
        return math.fsum(self.e2e_probs)

    @property
    def mean_e2e_prob(self) -> Optional[float]:
        return self.sum_e2e_prob / self.m_t if self.e2e_probs else None


@dataclass
class RunTrace:
    method: MethodKind
    seed: int
    steps: list[StepRecord] = field(default_factory=list)
    feedback: Optional[list[FeedbackSample]] = None
    final_models: Optional[tuple[RiskModelParams, ...]] = None

    def __len__(self):
        return len(self.steps)

    @property
    def p_avg(self) -> Optional[float]:
        try:
            return p_avg(self)
        except NoDataError:
            return None


def p_avg(trace: RunTrace | Sequence[StepRecord]) -> float:
    """Mean over steps with requests of the per-step mean end-to-end probability."""
    steps = trace.steps if isinstance(trace, RunTrace) else trace
    means = [s.mean_e2e_prob for s in steps if s.m_t > 0]
    if not means:
        raise NoDataError("trace contains no requests")
    return math.fsum(means) / len(means)


def _rng(seed, stream, *keys):
    return np.random.default_rng([seed, stream, *keys])


def _check_models(models, cfg):
    models = tuple(models)
    if len(models) != cfg.n_domains:
        raise ConfigError(f"got {len(models)} risk models for {cfg.n_domains} domains")
    return models


def run_episode(cfg: EpisodeConfig, initial_models: Optional[Sequence[RiskModelParams]] = None,
                collect_feedback: bool = False, feedback_log: Optional[FeedbackLog] = None,
                history: Optional[Sequence[FeedbackSample]] = None) -> RunTrace:
    """Simulate one episode under ``cfg.method``.

    Learning methods start from ``initial_models`` when given, otherwise from
    freshly trained Static models. ``history`` pre-fills Rade's buffers; when
    omitted and ``static_warmup.prefill_buffer`` is set, the warm-up feedback
    is regenerated from ``warmup_seed``.
    """
    method = cfg.method
    n_domains = cfg.n_domains
    models = None
    if method.uses_models:
        models = _check_models(initial_models, cfg) if initial_models is not None \
            else make_static_models(cfg)
    buffers = [FifoBuffer(cfg.buffer_capacity) for _ in range(n_domains)]
    if method is MethodKind.RADE and cfg.static_warmup.prefill_buffer:
        if history is None:
            history = warmup_feedback(cfg)
        for d in range(n_domains):
            buffers[d].push_batch(s for s in history if s.domain_id == d)
    pending: list[list[FeedbackSample]] = [[] for _ in range(n_domains)]
    trace = RunTrace(method, cfg.seed, feedback=[] if collect_feedback else None)

    for t in range(cfg.traffic.total_steps):
        lam = traffic_factor(cfg.traffic, t)

        # learning phase: feedback from step t-1 only
        if method.learns_online:
            new_models = list(models)
            for d in range(n_domains):
                buf = buffers[d]
                if method is MethodKind.RADE_STAR:
                    buf.clear()
                buf.push_batch(pending[d])
                snap = buf.snapshot()
                if snap:
                    X, y = to_training_arrays(snap)
                    new_models[d] = run_epochs(models[d], X, y, cfg.ogd.passes_per_step, cfg.ogd,
                                               _rng(cfg.seed, _STREAM_LEARN, t, d), mode=ONLINE_BN_MODE)
            models = tuple(new_models)

        # inference phase
        m_t = sample_arrivals(cfg.traffic, t, _rng(cfg.seed, _STREAM_ARRIVALS, t))
        pending = [[] for _ in range(n_domains)]
        probs = []
        decomps = [] if cfg.verbose else None
        for m in range(m_t):
            target = sample_request(_rng(cfg.seed, _STREAM_REQUEST, t, m))
            if method is MethodKind.RANDOM:
                dec = decompose_random(target, n_domains, _rng(cfg.seed, _STREAM_SPLIT, t, m))
            elif method is MethodKind.OPT:
                dec, _ = decompose_opt(cfg.domains, target, lam, cfg.decomposer)
            else:
                dec, _ = decompose(models, target, cfg.decomposer)
            p_true = [acceptance_prob(dom, part, lam) for dom, part in zip(cfg.domains, dec)]
            probs.append(float(np.prod(p_true)))
            if decomps is not None:
                decomps.append(dec)
            for d, (dom, part) in enumerate(zip(cfg.domains, dec)):
                accepted, corrupted = feedback(dom, part, lam, cfg.corruption,
                                               _rng(cfg.seed, _STREAM_FEEDBACK, t, m, d))
                pending[d].append(FeedbackSample(d, part, accepted, t, corrupted))

        step_feedback = [s for per_domain in pending for s in per_domain]
        if trace.feedback is not None:
            trace.feedback.extend(step_feedback)
        if feedback_log is not None:
            feedback_log.write(step_feedback)
        trace.steps.append(StepRecord(t, lam, tuple(probs),
                                      tuple(decomps) if decomps is not None else None))

    trace.final_models = models
    return trace


def warmup_feedback(cfg: EpisodeConfig) -> list[FeedbackSample]:
    """All feedback of the Random episode run under ``cfg.warmup_seed``."""
    warm = cfg.replace(method=MethodKind.RANDOM, seed=cfg.warmup_seed, verbose=False)
    return run_episode(warm, collect_feedback=True).feedback


def make_static_models(cfg: EpisodeConfig, history: Optional[Sequence[FeedbackSample]] = None
                       ) -> tuple[RiskModelParams, ...]:
    """Train one risk model per domain on feedback from a Random warm-up episode."""
    if history is None:
        history = warmup_feedback(cfg)
    models = []
    for d in range(cfg.n_domains):
        samples = [s for s in history if s.domain_id == d]
        if not samples:
            raise InsufficientDataError(
                f"warm-up episode (seed {cfg.warmup_seed}) produced no feedback for domain {d}")
        X, y = to_training_arrays(samples)
        params, loss = train_to_convergence(X, y, cfg.static_warmup.epochs, cfg.static_ogd,
                                            rng=_rng(cfg.warmup_seed, _STREAM_INIT, d))
        log.debug("static model %d: %d samples, final loss %.4f", d, len(samples), loss)
        models.append(params)
    return tuple(models)
