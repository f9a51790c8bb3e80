"""Split an end-to-end SLA into per-domain partial SLOs.

Throughput is never searched: every acceptance model is non-increasing in
required throughput, so assigning the end-to-end throughput to every domain
is optimal. Delay is split by exhaustive search over the grid compositions of
the delay budget, then polished by pairwise transfers at a tenth of the grid
step.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .risk_model import MonotoneRiskClassifier, RiskModelParams, predict_batch
from .simulation import AnalyticDomainModel, acceptance_prob_array
from .slo import Decomposition, SloVector
from .utils.validation import check_positive

ProbFn = Callable[[np.ndarray, float], np.ndarray]

REFINE_SUBDIVISIONS = 10


@dataclass(frozen=True)
class DecomposerConfig:
    grid_divisions: int = 50
    refine_iters: int = 2
    prob_floor: float = 1e-9

    def __post_init__(self):
        check_positive(self.grid_divisions, "grid_divisions", integer=True)
        check_positive(self.refine_iters, "refine_iters", integer=True, allow_zero=True)
        check_positive(self.prob_floor, "prob_floor")
        if not self.prob_floor < 0.5:
            raise ValueError("prob_floor must lie in (0, 0.5)")


@lru_cache(maxsize=64)
def grid_compositions(divisions: int, parts: int) -> np.ndarray:
    """All ways to write ``divisions`` as ``parts`` ordered non-negative integers.

    Rows come out in lexicographic order, so the first maximiser of any
    objective over them is the lexicographically smallest one.
    """
    if parts == 1:
        out = np.array([[divisions]], dtype=np.int64)
    else:
        out = np.vstack([
            np.column_stack([np.full(len(sub), k, dtype=np.int64), sub])
            for k in range(divisions + 1)
            for sub in (grid_compositions(divisions - k, parts - 1),)
        ])
    out.setflags(write=False)
    return out


def grid_delays(total_delay: float, divisions: int) -> np.ndarray:
    return total_delay * np.arange(divisions + 1) / divisions


def _learned_prob_fn(model) -> ProbFn:
    if isinstance(model, MonotoneRiskClassifier):
        model = model.params_
    if isinstance(model, RiskModelParams):
        params = model

        def fn(delays, theta):
            X = np.column_stack([delays, np.full(len(delays), theta)])
            return predict_batch(params, X, mode="eval", validate=False)

        return fn
    if callable(model):
        return model
    raise TypeError(f"cannot use {type(model).__name__} as a risk model")


def _analytic_prob_fn(model: AnalyticDomainModel, lambda_t: float) -> ProbFn:
    return lambda delays, theta: acceptance_prob_array(model, delays, theta, lambda_t)


def _search(prob_fns: Sequence[ProbFn], target: SloVector, cfg: DecomposerConfig):
    n_domains = len(prob_fns)
    if n_domains < 1:
        raise ValueError("need at least one domain")
    if not isinstance(target, SloVector):
        raise TypeError("target must be an SloVector")
    theta = target.throughput_gbps
    floor = cfg.prob_floor

    def score(fn, delays):
        p = np.asarray(fn(delays, theta), dtype=np.float64)
        return p, np.log(np.maximum(p, floor))

    if target.delay_ms == 0.0 or n_domains == 1:
        delays = np.zeros(n_domains) if n_domains > 1 else np.array([target.delay_ms])
        probs = [float(score(fn, delays[d:d + 1])[0][0]) for d, fn in enumerate(prob_fns)]
        return delays, probs

    G = cfg.grid_divisions
    grid = grid_delays(target.delay_ms, G)
    table_p, table_log = zip(*(score(fn, grid) for fn in prob_fns))
    comps = grid_compositions(G, n_domains)
    objective = table_log[0][comps[:, 0]]
    for d in range(1, n_domains):
        objective = objective + table_log[d][comps[:, d]]
    best = comps[int(np.argmax(objective))]

    delays = grid[best].copy()
    probs = [float(table_p[d][best[d]]) for d in range(n_domains)]
    logs = [float(table_log[d][best[d]]) for d in range(n_domains)]

    step = target.delay_ms / (G * REFINE_SUBDIVISIONS)
    shifts = step * np.concatenate([np.arange(-REFINE_SUBDIVISIONS, 0), np.arange(1, REFINE_SUBDIVISIONS + 1)])
    for _ in range(cfg.refine_iters):
        for i in range(n_domains):
            for j in range(i + 1, n_domains):
                new_i = delays[i] + shifts
                new_j = delays[j] - shifts
                ok = (new_i >= 0) & (new_j >= 0)
                if not ok.any():
                    continue
                new_i, new_j = new_i[ok], new_j[ok]
                p_i, l_i = score(prob_fns[i], new_i)
                p_j, l_j = score(prob_fns[j], new_j)
                k = int(np.argmax(l_i + l_j))
                trial = list(logs)
                trial[i], trial[j] = float(l_i[k]), float(l_j[k])
                if sum(trial) > sum(logs):
                    logs = trial
                    delays[i], delays[j] = new_i[k], new_j[k]
                    probs[i], probs[j] = float(p_i[k]), float(p_j[k])
    return delays, probs


def _result(delays, probs, target):
    return Decomposition.from_delays(delays, target.throughput_gbps), float(np.prod(probs))


def decompose(models: Sequence, target: SloVector, cfg: DecomposerConfig = DecomposerConfig()):
    """Best split under learned risk models.

    ``models`` may hold RiskModelParams, fitted MonotoneRiskClassifier
    instances, or callables ``(delays, throughput) -> probabilities``.
    Returns ``(Decomposition, predicted end-to-end probability)``.
    """
    return _result(*_search([_learned_prob_fn(m) for m in models], target, cfg), target)


def decompose_opt(analytic_models: Sequence[AnalyticDomainModel], target: SloVector, lambda_t: float,
                  cfg: DecomposerConfig = DecomposerConfig()):
    """Same search scored with the true acceptance probabilities at ``lambda_t``."""
    fns = [_analytic_prob_fn(m, lambda_t) for m in analytic_models]
    return _result(*_search(fns, target, cfg), target)


def decompose_random(target: SloVector, n_domains: int, rng: np.random.Generator) -> Decomposition:
    """Delay split drawn uniformly from the simplex."""
    if n_domains < 1:
        raise ValueError("need at least one domain")
    cuts = np.sort(rng.uniform(0.0, target.delay_ms, size=n_domains - 1))
    delays = np.diff(np.concatenate([[0.0], cuts, [target.delay_ms]]))
    return Decomposition.from_delays(delays, target.throughput_gbps)
