"""JSON experiment configuration.

A config is a JSON object whose dotted key paths are the documented keys,
e.g. ``traffic.total_steps``. Nested objects and flat dotted keys are both
accepted and may be mixed. Unknown keys are rejected so typos surface early.

Episode config (``version`` 1)::

    method                      random | static | rade_star | rade | opt
    seed                        int >= 0 (RADE_SEED env var overrides)
    domains[].alpha             float > 0
    domains[].tau_ref_ms        float > 0
    domains[].theta_ref_gbps    float > 0
    traffic.total_steps         int >= 0 (required)
    traffic.arrival_scale       float >= 0 (required)
    corruption.p_c              float in [0, 1]
    buffer_capacity             int >= 1
    ogd.step_size, ogd.passes_per_step, ogd.minibatch_size,
    ogd.bn_momentum, ogd.bn_epsilon
    decomposer.grid_divisions, decomposer.refine_iters, decomposer.prob_floor
    static_warmup.epochs, static_warmup.warmup_seed, static_warmup.step_size,
    static_warmup.prefill_buffer
    static_models               path to a train-static output (optional)
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .decomposer import DecomposerConfig
from .risk_model import OgdConfig
from .runtime import ConfigError, EpisodeConfig, MethodKind, StaticWarmup
from .simulation import DEFAULT_DOMAINS, AnalyticDomainModel, CorruptionConfig, TrafficProcess

CONFIG_VERSION = 1
SEED_ENV = "RADE_SEED"

_INT, _FLOAT, _OPT_INT, _OPT_FLOAT, _STR, _BOOL = "int", "float", "int?", "float?", "str", "bool"

_SECTIONS = {
    "traffic": {"total_steps": _INT, "arrival_scale": _FLOAT},
    "corruption": {"p_c": _FLOAT},
    "ogd": {"step_size": _FLOAT, "passes_per_step": _INT, "minibatch_size": _INT,
            "bn_momentum": _FLOAT, "bn_epsilon": _FLOAT},
    "decomposer": {"grid_divisions": _INT, "refine_iters": _INT, "prob_floor": _FLOAT},
    "static_warmup": {"epochs": _INT, "warmup_seed": _OPT_INT, "step_size": _OPT_FLOAT,
                      "prefill_buffer": _BOOL},
}
_DOMAIN_KEYS = {"alpha": _FLOAT, "tau_ref_ms": _FLOAT, "theta_ref_gbps": _FLOAT}
_TOP = {"version": _INT, "method": _STR, "seed": _INT, "buffer_capacity": _INT,
        "static_models": _STR, "domains": None, **{k: None for k in _SECTIONS}}

REQUIRED_EPISODE_KEYS = ("traffic.total_steps", "traffic.arrival_scale")


def _coerce(value, kind, key):
    if kind in (_OPT_INT, _OPT_FLOAT) and value is None:
        return None
    if kind == _BOOL:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true or false, got {value!r}")
        return value
    if kind in (_INT, _OPT_INT):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if kind in (_FLOAT, _OPT_FLOAT):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    return value


def unflatten(doc: dict) -> dict:
    """Expand dotted top-level keys into nested objects."""
    out: dict = {}
    for key, value in doc.items():
        parts = key.split(".")
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{key}: conflicts with a non-object value")
        if parts[-1] in node and isinstance(node[parts[-1]], dict) and isinstance(value, dict):
            node[parts[-1]].update(value)
        else:
            node[parts[-1]] = value
    return out


def read_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def _section(doc, name, defaults_obj, cls):
    raw = doc.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object")
    spec = _SECTIONS[name]
    values = {}
    for key, value in raw.items():
        if key not in spec:
            raise ConfigError(f"unknown key {name}.{key}")
        values[key] = _coerce(value, spec[key], f"{name}.{key}")
    try:
        return cls(**{**defaults_obj.__dict__, **values})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _domains(doc):
    raw = doc.get("domains")
    if raw is None:
        return DEFAULT_DOMAINS
    if not isinstance(raw, list) or not raw:
        raise ConfigError("domains: expected a non-empty list")
    out = []
    for i, d in enumerate(raw):
        if not isinstance(d, dict):
            raise ConfigError(f"domains[{i}]: expected an object")
        values = {}
        for key, value in d.items():
            if key not in _DOMAIN_KEYS:
                raise ConfigError(f"unknown key domains[{i}].{key}")
            values[key] = _coerce(value, _DOMAIN_KEYS[key], f"domains[{i}].{key}")
        try:
            out.append(AnalyticDomainModel(**values))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"domains[{i}]: {exc}") from exc
    return tuple(out)


def _has_key(doc, dotted):
    node = doc
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return False
        node = node[part]
    return True


@dataclass(frozen=True)
class LoadedConfig:
    episode: EpisodeConfig
    static_models: Optional[Path] = None
    raw: dict = field(default_factory=dict, compare=False)


def parse_episode(doc: dict, require=REQUIRED_EPISODE_KEYS, base_dir=None) -> LoadedConfig:
    doc = unflatten(doc)
    for key in doc:
        if key not in _TOP:
            raise ConfigError(f"unknown key {key}")
    version = doc.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"version: unsupported config version {version!r}")
    for key in require:
        if not _has_key(doc, key):
            raise ConfigError(f"missing required key {key}")
    base = EpisodeConfig()
    seed = _coerce(doc.get("seed", 0), _INT, "seed")
    capacity = _coerce(doc.get("buffer_capacity", base.buffer_capacity), _INT, "buffer_capacity")
    method = MethodKind.parse(_coerce(doc.get("method", base.method.value), _STR, "method"))
    try:
        episode = EpisodeConfig(
            method=method,
            domains=_domains(doc),
            traffic=_section(doc, "traffic", base.traffic, TrafficProcess),
            corruption=_section(doc, "corruption", base.corruption, CorruptionConfig),
            ogd=_section(doc, "ogd", base.ogd, OgdConfig),
            buffer_capacity=capacity,
            decomposer=_section(doc, "decomposer", base.decomposer, DecomposerConfig),
            seed=seed,
            static_warmup=_section(doc, "static_warmup", base.static_warmup, StaticWarmup),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    static_path = doc.get("static_models")
    if static_path is not None:
        static_path = Path(_coerce(static_path, _STR, "static_models"))
        if base_dir is not None and not static_path.is_absolute():
            static_path = Path(base_dir) / static_path
    return LoadedConfig(episode, static_path, doc)


def load_episode_config(path, seed_override=None) -> LoadedConfig:
    """Read an episode config, applying ``--seed`` or ``RADE_SEED`` if set."""
    loaded = parse_episode(read_json(path), base_dir=Path(path).parent)
    seed = resolve_seed(seed_override)
    if seed is not None:
        loaded = LoadedConfig(loaded.episode.replace(seed=seed), loaded.static_models, loaded.raw)
    return loaded


def resolve_seed(seed_override=None):
    if seed_override is not None:
        return int(seed_override)
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return None
    try:
        seed = int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if seed < 0:
        raise ConfigError(f"{SEED_ENV} must be non-negative")
    return seed


def episode_to_dict(cfg: EpisodeConfig) -> dict:
    """Inverse of :func:`parse_episode`, for recording resolved configs."""
    return {
        "version": CONFIG_VERSION,
        "method": cfg.method.value,
        "seed": cfg.seed,
        "domains": [d.__dict__.copy() for d in cfg.domains],
        "traffic": cfg.traffic.__dict__.copy(),
        "corruption": cfg.corruption.__dict__.copy(),
        "ogd": cfg.ogd.__dict__.copy(),
        "buffer_capacity": cfg.buffer_capacity,
        "decomposer": cfg.decomposer.__dict__.copy(),
        "static_warmup": cfg.static_warmup.__dict__.copy(),
    }
