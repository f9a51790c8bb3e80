"""Input checks shared by the estimator and the functional core."""

import numbers

import numpy as np
from sklearn.utils import check_array, column_or_1d

from ..slo import SloVector


def check_slo_matrix(X, name="X"):
    """Coerce ``X`` to a float64 (n, 2) array of [delay_ms, throughput_gbps] rows.

    Accepts a single SloVector, a sequence of SloVectors, or anything
    ``check_array`` understands.
    """
    if isinstance(X, SloVector):
        X = [X.as_tuple()]
    elif isinstance(X, (list, tuple)) and X and isinstance(X[0], SloVector):
        X = [s.as_tuple() for s in X]
    X = check_array(X, dtype=np.float64, ensure_all_finite=True, input_name=name)
    if X.shape[1] != 2:
        raise ValueError(f"{name} must have 2 columns (delay_ms, throughput_gbps), got {X.shape[1]}")
    if np.any(X < 0):
        raise ValueError(f"{name} must be non-negative")
    return X


def check_binary_labels(y, n_samples):
    y = column_or_1d(y, warn=True)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != n_samples:
        raise ValueError(f"got {y.shape[0]} labels for {n_samples} samples")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")
    return y


def check_positive(value, name, integer=False, allow_zero=False):
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind):
        raise TypeError(f"{name} must be {'an integer' if integer else 'a real number'}, got {value!r}")
    if not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} must be {'non-negative' if allow_zero else 'positive'}, got {value!r}")
    return value


def check_unit_interval(value, name, open_interval=False):
    check_positive(value, name, allow_zero=True)
    if open_interval and not 0 < value < 1:
        raise ValueError(f"{name} must lie in (0, 1), got {value!r}")
    if value > 1:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return value
