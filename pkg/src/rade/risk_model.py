"""Monotone acceptance-probability MLP.

The network maps a (delay, throughput) SLO to the probability that a domain
accepts it. Monotonicity in SLO strictness is enforced structurally by
applying ``abs`` to every linear weight and batch-norm scale and by
sign-encoding the inputs so that a looser SLO is larger in every feature.
Hidden layers run linear -> tanh -> batch norm.

The functional core (``forward``, ``bce_loss``, ``gradient``, ``ogd_step``,
``train_to_convergence``) works on immutable :class:`RiskModelParams`
snapshots. :class:`MonotoneRiskClassifier` wraps it in the scikit-learn
estimator API.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .slo import SloVector
from .utils.validation import (
    check_binary_labels,
    check_positive,
    check_slo_matrix,
    check_unit_interval,
)

PROB_CLAMP = 1e-9
MIN_BN_BATCH = 4
FORMAT_NAME = "rade-risk-model"
FORMAT_VERSION = 1


class NumericError(ArithmeticError):
    """Raised when a forward or backward pass produces a non-finite value."""

    def __init__(self, message, layer=None):
        super().__init__(message if layer is None else f"{message} (layer {layer})")
        self.layer = layer


@dataclass(frozen=True)
class OgdConfig:
    step_size: float = 0.01
    passes_per_step: int = 5
    minibatch_size: int = 32
    bn_momentum: float = 0.1
    bn_epsilon: float = 1e-5

    def __post_init__(self):
        check_positive(self.step_size, "step_size", allow_zero=True)
        check_positive(self.passes_per_step, "passes_per_step", integer=True)
        check_positive(self.minibatch_size, "minibatch_size", integer=True)
        check_unit_interval(self.bn_momentum, "bn_momentum", open_interval=True)
        check_positive(self.bn_epsilon, "bn_epsilon")


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HiddenLayer:
    weight: np.ndarray
    bias: np.ndarray
    bn_scale: np.ndarray
    bn_shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    def __post_init__(self):
        for name in ("weight", "bias", "bn_scale", "bn_shift", "running_mean", "running_var"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        width = self.weight.shape[0]
        if self.weight.ndim != 2:
            raise ValueError("weight must be a matrix")
        for name in ("bias", "bn_scale", "bn_shift", "running_mean", "running_var"):
            if getattr(self, name).shape != (width,):
                raise ValueError(f"{name} must have shape ({width},)")
        if np.any(self.running_var <= 0):
            raise ValueError("running variances must be strictly positive")


@dataclass(frozen=True)
class RiskModelParams:
    layers: tuple[HiddenLayer, ...]
    out_weight: np.ndarray
    out_bias: float
    input_scale: np.ndarray = field(default_factory=lambda: np.array([100.0, 1.0]))
    sign_mask: np.ndarray = field(default_factory=lambda: np.array([1.0, -1.0]))
    bn_epsilon: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for name in ("out_weight", "input_scale", "sign_mask"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "out_bias", float(self.out_bias))
        if not self.layers:
            raise ValueError("at least one hidden layer is required")
        if self.layers[0].weight.shape[1] != 2:
            raise ValueError("first layer must take 2 input features")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise ValueError("hidden layer shapes do not chain")
        if self.out_weight.shape != (self.layers[-1].weight.shape[0],):
            raise ValueError("output weight does not match last hidden width")
        if np.any(self.input_scale <= 0):
            raise ValueError("input_scale must be positive")
        if not np.all(np.isin(self.sign_mask, (-1.0, 1.0))):
            raise ValueError("sign_mask entries must be +1 or -1")

    def trainable(self) -> dict[str, np.ndarray]:
        """Named view of every trainable array, in a fixed order."""
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"layers.{i}.weight"] = layer.weight
            out[f"layers.{i}.bias"] = layer.bias
            out[f"layers.{i}.bn_scale"] = layer.bn_scale
            out[f"layers.{i}.bn_shift"] = layer.bn_shift
        out["out_weight"] = self.out_weight
        out["out_bias"] = np.asarray(self.out_bias)
        return out

    def replace_trainable(self, values: dict[str, np.ndarray]) -> "RiskModelParams":
        work = _thaw(self)
        for name, value in values.items():
            _set_named(work, name, np.array(value, dtype=np.float64))
        return _freeze(work)


def init_params(rng=None, width=8, depth=3, delay_ref_ms=100.0, throughput_ref_gbps=1.0,
                bn_epsilon=1e-5) -> RiskModelParams:
    """Uniform(-0.5, 0.5) weights, zero biases, identity batch norm."""
    rng = np.random.default_rng(rng)
    layers = []
    fan_in = 2
    for _ in range(depth):
        layers.append(HiddenLayer(
            weight=rng.uniform(-0.5, 0.5, size=(width, fan_in)),
            bias=np.zeros(width),
            bn_scale=np.ones(width),
            bn_shift=np.zeros(width),
            running_mean=np.zeros(width),
            running_var=np.ones(width),
        ))
        fan_in = width
    return RiskModelParams(
        layers=tuple(layers),
        out_weight=rng.uniform(-0.5, 0.5, size=width),
        out_bias=0.0,
        input_scale=np.array([delay_ref_ms, throughput_ref_gbps]),
        sign_mask=np.array([1.0, -1.0]),
        bn_epsilon=bn_epsilon,
    )


# Mutable mirror used inside training loops so each small step does not
# rebuild frozen dataclasses. Attribute names match the frozen types.

def _thaw(params):
    return SimpleNamespace(
        layers=[SimpleNamespace(**{k: np.array(getattr(l, k)) for k in
                                   ("weight", "bias", "bn_scale", "bn_shift", "running_mean", "running_var")})
                for l in params.layers],
        out_weight=np.array(params.out_weight),
        out_bias=float(params.out_bias),
        input_scale=params.input_scale,
        sign_mask=params.sign_mask,
        bn_epsilon=params.bn_epsilon,
    )


def _freeze(work):
    return RiskModelParams(
        layers=tuple(HiddenLayer(**vars(l)) for l in work.layers),
        out_weight=work.out_weight,
        out_bias=work.out_bias,
        input_scale=work.input_scale,
        sign_mask=work.sign_mask,
        bn_epsilon=work.bn_epsilon,
    )


def _set_named(work, name, value):
    if name == "out_weight":
        work.out_weight = value
    elif name == "out_bias":
        work.out_bias = float(value)
    else:
        _, i, attr = name.split(".")
        setattr(work.layers[int(i)], attr, value)


def _uses_batch_stats(mode, n):
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return mode == "train" and n >= MIN_BN_BATCH


def _forward(params, X, batch_stats):
    h = X * (params.sign_mask / params.input_scale)
    eps = params.bn_epsilon
    inv_n = 1.0 / X.shape[0]
    cache = []
    for layer in params.layers:
        w_abs = np.abs(layer.weight)
        a = np.tanh(h @ w_abs.T + layer.bias)
        if batch_stats:
            m = a.sum(axis=0) * inv_n
            d = a - m
            v = (d * d).sum(axis=0) * inv_n
        else:
            m = layer.running_mean
            v = layer.running_var
            d = a - m
        inv_std = 1.0 / np.sqrt(v + eps)
        xhat = d * inv_std
        cache.append((h, w_abs, a, xhat, inv_std, m, v))
        h = np.abs(layer.bn_scale) * xhat + layer.bn_shift
    logit = h @ np.abs(params.out_weight) + params.out_bias
    if not np.isfinite(logit.sum()):
        layer_idx = next((i for i, c in enumerate(cache[1:]) if not np.all(np.isfinite(c[0]))),
                         len(cache) - 1)
        raise NumericError("non-finite activation", layer=layer_idx)
    return expit(logit), (cache, h)


def _backward(params, cache, p, y, batch_stats):
    layer_cache, h_last = cache
    n = p.shape[0]
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    dlogit = (p - y) * inside * (1.0 / n)
    grads = {}
    grads["out_bias"] = np.asarray(dlogit.sum())
    grads["out_weight"] = (h_last.T @ dlogit) * np.sign(params.out_weight)
    dh = np.outer(dlogit, np.abs(params.out_weight))
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        h_prev, w_abs, a, xhat, inv_std, _, _ = layer_cache[i]
        grads[f"layers.{i}.bn_shift"] = dh_sum = dh.sum(axis=0)
        dh_xhat = (dh * xhat).sum(axis=0)
        grads[f"layers.{i}.bn_scale"] = dh_xhat * np.sign(layer.bn_scale)
        g_abs = np.abs(layer.bn_scale)
        if batch_stats:
            # batch-norm backward with the batch mean and variance as functions of the input
            da = (g_abs * inv_std) * (dh - (dh_sum + xhat * dh_xhat) * (1.0 / n))
        else:
            da = dh * (g_abs * inv_std)
        dz = da * (1.0 - a * a)
        grads[f"layers.{i}.weight"] = (dz.T @ h_prev) * np.sign(layer.weight)
        grads[f"layers.{i}.bias"] = dz.sum(axis=0)
        dh = dz @ w_abs
    if not np.isfinite(dh.sum() + grads["out_weight"].sum()):
        bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
        raise NumericError(f"non-finite gradient for {', '.join(bad) or 'input'}")
    return grads


def _bce(p, y):
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)))


def _check_batch(X, y):
    X = check_slo_matrix(X)
    y = check_binary_labels(y, X.shape[0])
    return X, y


def predict_batch(params: RiskModelParams, X, mode="eval", validate=True) -> np.ndarray:
    if validate:
        X = check_slo_matrix(X)
    p, _ = _forward(params, X, _uses_batch_stats(mode, X.shape[0]))
    return p


def forward(params: RiskModelParams, s: SloVector, mode="eval") -> float:
    """Acceptance probability of a single SLO."""
    return float(predict_batch(params, s, mode)[0])


def bce_loss(params: RiskModelParams, X, y, mode="train") -> float:
    """Mean binary cross-entropy of the model on a labelled batch."""
    X, y = _check_batch(X, y)
    p, _ = _forward(params, X, _uses_batch_stats(mode, X.shape[0]))
    return _bce(p, y)


def gradient(params: RiskModelParams, X, y, mode="train") -> dict[str, np.ndarray]:
    """Exact gradient of :func:`bce_loss`, keyed like ``params.trainable()``."""
    X, y = _check_batch(X, y)
    batch_stats = _uses_batch_stats(mode, X.shape[0])
    p, cache = _forward(params, X, batch_stats)
    return _backward(params, cache, p, y, batch_stats)


def _step_inplace(work, X, y, cfg, mode="train"):
    n = X.shape[0]
    batch_stats = _uses_batch_stats(mode, n)
    p, cache = _forward(work, X, batch_stats)
    grads = _backward(work, cache, p, y, batch_stats)
    eta = cfg.step_size
    mom = cfg.bn_momentum
    for i, layer in enumerate(work.layers):
        layer.weight = layer.weight - eta * grads[f"layers.{i}.weight"]
        layer.bias = layer.bias - eta * grads[f"layers.{i}.bias"]
        layer.bn_scale = layer.bn_scale - eta * grads[f"layers.{i}.bn_scale"]
        layer.bn_shift = layer.bn_shift - eta * grads[f"layers.{i}.bn_shift"]
        if batch_stats:
            _, _, _, _, _, m, v = cache[0][i]
            layer.running_mean = (1.0 - mom) * layer.running_mean + mom * m
            layer.running_var = (1.0 - mom) * layer.running_var + mom * v * (n / (n - 1))
    work.out_weight = work.out_weight - eta * grads["out_weight"]
    work.out_bias = work.out_bias - eta * float(grads["out_bias"])


def ogd_step(params: RiskModelParams, X, y, cfg: OgdConfig = OgdConfig(), mode="train") -> RiskModelParams:
    """One gradient-descent step on a batch, returning new parameters.

    In ``"train"`` mode batches of at least ``MIN_BN_BATCH`` samples are
    normalised with their own statistics, which also move the running
    statistics. ``"eval"`` mode keeps batch norm frozen.
    """
    X, y = _check_batch(X, y)
    work = _thaw(params)
    _step_inplace(work, X, y, cfg, mode)
    return _freeze(work)


def run_epochs(params: RiskModelParams, X, y, epochs, cfg: OgdConfig, rng, mode="train") -> RiskModelParams:
    """Shuffled minibatch passes of :func:`ogd_step` over a dataset."""
    X, y = _check_batch(X, y)
    check_positive(epochs, "epochs", integer=True, allow_zero=True)
    if epochs == 0:
        return params
    rng = np.random.default_rng(rng)
    work = _thaw(params)
    n = X.shape[0]
    bs = cfg.minibatch_size
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            _step_inplace(work, X[idx], y[idx], cfg, mode)
    return _freeze(work)


def train_to_convergence(X, y, epochs, cfg: OgdConfig = OgdConfig(), rng=None, init=None):
    """Train from ``init`` (or a fresh model) for ``epochs`` passes.

    Returns ``(params, final_loss)`` with the loss measured in eval mode
    over the full dataset.
    """
    X, y = _check_batch(X, y)
    rng = np.random.default_rng(rng)
    params = init if init is not None else init_params(rng, bn_epsilon=cfg.bn_epsilon)
    params = run_epochs(params, X, y, epochs, cfg, rng)
    return params, bce_loss(params, X, y, mode="eval")


def params_to_dict(params: RiskModelParams) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "bn_epsilon": params.bn_epsilon,
        "input_scale": {"delay_ref_ms": float(params.input_scale[0]),
                        "throughput_ref_gbps": float(params.input_scale[1])},
        "sign_mask": params.sign_mask.tolist(),
        "layers": [
            {
                "weight": l.weight.tolist(),
                "bias": l.bias.tolist(),
                "bn_scale": l.bn_scale.tolist(),
                "bn_shift": l.bn_shift.tolist(),
                "running_mean": l.running_mean.tolist(),
                "running_var": l.running_var.tolist(),
            }
            for l in params.layers
        ],
        "output": {"weight": params.out_weight.tolist(), "bias": params.out_bias},
    }


def params_from_dict(data: dict) -> RiskModelParams:
    if data.get("format") != FORMAT_NAME:
        raise ValueError(f"not a {FORMAT_NAME} document")
    if data.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported {FORMAT_NAME} version {data.get('version')!r}")
    try:
        scale = data["input_scale"]
        return RiskModelParams(
            layers=tuple(HiddenLayer(**{k: np.asarray(v, dtype=np.float64) for k, v in l.items()})
                         for l in data["layers"]),
            out_weight=np.asarray(data["output"]["weight"], dtype=np.float64),
            out_bias=data["output"]["bias"],
            input_scale=np.array([scale["delay_ref_ms"], scale["throughput_ref_gbps"]]),
            sign_mask=np.asarray(data["sign_mask"], dtype=np.float64),
            bn_epsilon=data["bn_epsilon"],
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed {FORMAT_NAME} document: {exc}") from exc


def save_params(params_list, path):
    """Write one or more parameter sets as a JSON document."""
    if isinstance(params_list, RiskModelParams):
        params_list = [params_list]
    doc = {"format": FORMAT_NAME + "-set", "version": FORMAT_VERSION,
           "models": [params_to_dict(p) for p in params_list]}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_params(path) -> list[RiskModelParams]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") == FORMAT_NAME:
        return [params_from_dict(doc)]
    if doc.get("format") != FORMAT_NAME + "-set" or doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: not a {FORMAT_NAME}-set v{FORMAT_VERSION} document")
    return [params_from_dict(d) for d in doc["models"]]


class MonotoneRiskClassifier(ClassifierMixin, BaseEstimator):
    """scikit-learn classifier backed by the monotone risk network.

    ``X`` rows are ``[delay_ms, throughput_gbps]``; ``y`` is 1 for accepted
    requests. ``fit`` trains from scratch for ``max_epochs`` passes,
    ``partial_fit`` runs one online update round of ``passes_per_step``
    passes from the current parameters.
    """

    def __init__(self, hidden_width=8, n_hidden_layers=3, step_size=0.01, passes_per_step=5,
                 minibatch_size=32, bn_momentum=0.1, bn_epsilon=1e-5, max_epochs=200,
                 delay_ref_ms=100.0, throughput_ref_gbps=1.0, warm_start=False, random_state=None):
        self.hidden_width = hidden_width
        self.n_hidden_layers = n_hidden_layers
        self.step_size = step_size
        self.passes_per_step = passes_per_step
        self.minibatch_size = minibatch_size
        self.bn_momentum = bn_momentum
        self.bn_epsilon = bn_epsilon
        self.max_epochs = max_epochs
        self.delay_ref_ms = delay_ref_ms
        self.throughput_ref_gbps = throughput_ref_gbps
        self.warm_start = warm_start
        self.random_state = random_state

    @classmethod
    def from_params(cls, params: RiskModelParams, **kwargs):
        est = cls(delay_ref_ms=float(params.input_scale[0]),
                  throughput_ref_gbps=float(params.input_scale[1]),
                  hidden_width=params.out_weight.shape[0],
                  n_hidden_layers=len(params.layers),
                  bn_epsilon=params.bn_epsilon, **kwargs)
        est._set_fitted(params)
        return est

    @property
    def ogd_config(self):
        return OgdConfig(self.step_size, self.passes_per_step, self.minibatch_size,
                         self.bn_momentum, self.bn_epsilon)

    def _set_fitted(self, params):
        self.params_ = params
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = 2

    def _rng(self):
        if not hasattr(self, "_rng_"):
            self._rng_ = np.random.default_rng(self.random_state)
        return self._rng_

    def _init(self):
        check_positive(self.hidden_width, "hidden_width", integer=True)
        check_positive(self.n_hidden_layers, "n_hidden_layers", integer=True)
        return init_params(self._rng(), width=self.hidden_width, depth=self.n_hidden_layers,
                           delay_ref_ms=self.delay_ref_ms,
                           throughput_ref_gbps=self.throughput_ref_gbps,
                           bn_epsilon=self.bn_epsilon)

    def fit(self, X, y):
        X, y = _check_batch(X, y)
        cfg = self.ogd_config
        self._rng_ = np.random.default_rng(self.random_state)
        start = self.params_ if self.warm_start and hasattr(self, "params_") else self._init()
        params, self.loss_ = train_to_convergence(X, y, self.max_epochs, cfg, self._rng(), init=start)
        self._set_fitted(params)
        return self

    def partial_fit(self, X, y, classes=None):
        X, y = _check_batch(X, y)
        if not hasattr(self, "params_"):
            self._set_fitted(self._init())
        self._set_fitted(run_epochs(self.params_, X, y, self.passes_per_step,
                                    self.ogd_config, self._rng()))
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        p = predict_batch(self.params_, X, mode="eval")
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return self.classes_[(self.predict_proba(X)[:, 1] >= 0.5).astype(int)]

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.input_tags.positive_only = True
        return tags
