"""Finite-difference check of the risk-model gradient."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .risk_model import RiskModelParams, bce_loss, gradient, init_params

DEFAULT_CONFIGS = 100
DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
# denominator floor: coordinates whose true gradient is ~0 are compared absolutely
REL_ERROR_FLOOR = 1e-6

GradFn = Callable[[RiskModelParams, np.ndarray, np.ndarray, str], dict]


@dataclass(frozen=True)
class GradcheckReport:
    n_configs: int
    n_coordinates: int
    max_rel_error: float
    worst_config: int
    worst_param: str
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tolerance)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"gradcheck {status}: max relative error {self.max_rel_error:.3e} "
                f"(tolerance {self.tolerance:.0e}) over {self.n_configs} configurations, "
                f"{self.n_coordinates} coordinates; worst at config {self.worst_config}, {self.worst_param}")


def rel_error(a, b, floor=REL_ERROR_FLOOR):
    return abs(a - b) / max(abs(a), abs(b), floor)


def _signed_uniform(rng, shape, lo, hi):
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(lo, hi, size=shape)


def random_config(rng: np.random.Generator):
    """Random parameters, batch and BN mode.

    Weights and BN scales are kept away from zero: |w| has a kink there and a
    central difference straddling it measures the kink, not the gradient.
    """
    params = init_params(rng)
    values = {}
    for name, v in params.trainable().items():
        if name.endswith("weight") or name.endswith("bn_scale"):
            values[name] = _signed_uniform(rng, v.shape, 0.05, 1.0)
        else:
            values[name] = rng.uniform(-0.5, 0.5, size=v.shape)
    params = params.replace_trainable(values)
    n = int(rng.integers(1, 17))
    X = np.column_stack([rng.uniform(0.0, 120.0, n), rng.uniform(0.0, 1.0, n)])
    y = rng.integers(0, 2, n).astype(np.float64)
    mode = "train" if rng.random() < 0.75 else "eval"
    return params, X, y, mode


def _default_grad(params, X, y, mode):
    return gradient(params, X, y, mode=mode)


def gradcheck(seed: int = 0, n_configs: int = DEFAULT_CONFIGS, step: float = DEFAULT_STEP,
              tolerance: float = DEFAULT_TOLERANCE, grad_fn: Optional[GradFn] = None) -> GradcheckReport:
    """Compare ``grad_fn`` (default: the analytic gradient) with central differences."""
    grad_fn = grad_fn or _default_grad
    rng = np.random.default_rng(seed)
    worst = (0.0, -1, "")
    n_coords = 0
    for c in range(n_configs):
        params, X, y, mode = random_config(rng)
        analytic = grad_fn(params, X, y, mode)
        for name, value in params.trainable().items():
            base = np.asarray(value, dtype=np.float64)
            flat_grad = np.ravel(analytic[name])
            for j in range(base.size):
                def loss_at(delta):
                    a = base.copy().ravel()
                    a[j] += delta
                    return bce_loss(params.replace_trainable({name: a.reshape(base.shape)}), X, y, mode=mode)

                numeric = (loss_at(step) - loss_at(-step)) / (2.0 * step)
                err = rel_error(float(flat_grad[j]), numeric)
                n_coords += 1
                if err > worst[0]:
                    worst = (err, c, f"{name}[{j}]")
    return GradcheckReport(n_configs, n_coords, worst[0], worst[1], worst[2], tolerance)
