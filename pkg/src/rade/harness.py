"""Experiment sweeps and CSV output.

CSV schemas (column order is fixed, numbers use 6 significant digits):

    run trace      t,lambda_t,m_t,method,mean_e2e_prob
    fig3.csv       method,arrival_rate,p_avg_mean,p_avg_std
    fig5.csv       method,corruption_rate,p_avg_mean,p_avg_std
    fig4_trace.csv t,lambda_t,m_t,<method>... (per-step mean E2E probability)

Empty cells mean "no requests at this step". Standard deviations are
population values (ddof=0) across seeds.
"""

from __future__ import annotations

import io
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import ConfigError, parse_episode, read_json, resolve_seed
from .runtime import (
    EpisodeConfig,
    MethodKind,
    RunTrace,
    make_static_models,
    run_episode,
    warmup_feedback,
)
from .simulation import CorruptionConfig, TrafficProcess

log = logging.getLogger(__name__)

RUN_HEADER = ("t", "lambda_t", "m_t", "method", "mean_e2e_prob")
FIG3_HEADER = ("method", "arrival_rate", "p_avg_mean", "p_avg_std")
FIG5_HEADER = ("method", "corruption_rate", "p_avg_mean", "p_avg_std")

DEFAULT_ARRIVAL_RATES = (0.3, 0.5, 0.7)
DEFAULT_CORRUPTION_RATES = (0.0, 0.1, 0.2, 0.3)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
FIG5_ARRIVAL_RATE = 0.5


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".6g")


def _csv(rows) -> str:
    return "".join(",".join(cells) + "\n" for cells in rows)


def atomic_write_text(path, text: str):
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_csv(trace: RunTrace) -> str:
    rows = [RUN_HEADER]
    for s in trace.steps:
        rows.append((fmt(s.t), fmt(s.lambda_t), fmt(s.m_t), trace.method.value, fmt(s.mean_e2e_prob)))
    return _csv(rows)


def write_trace_csv(trace: RunTrace, path):
    atomic_write_text(path, trace_csv(trace))


@dataclass(frozen=True)
class SweepSpec:
    methods: tuple[MethodKind, ...] = tuple(MethodKind)
    arrival_rates: tuple[float, ...] = DEFAULT_ARRIVAL_RATES
    corruption_rates: tuple[float, ...] = DEFAULT_CORRUPTION_RATES
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    base: EpisodeConfig = EpisodeConfig()
    fig5_arrival_rate: float = FIG5_ARRIVAL_RATE
    trace_seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(dict.fromkeys(MethodKind.parse(m) for m in self.methods)))
        for name in ("arrival_rates", "corruption_rates", "seeds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise ConfigError(f"{name} must be non-empty")
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        for r in self.arrival_rates + (self.fig5_arrival_rate,):
            if isinstance(r, bool) or not isinstance(r, (int, float)) or not math.isfinite(r) or r < 0:
                raise ConfigError(f"arrival rates must be finite and non-negative, got {r!r}")
        for p in self.corruption_rates:
            if isinstance(p, bool) or not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
                raise ConfigError(f"corruption rates must lie in [0, 1], got {p!r}")
        for s in self.seeds:
            if isinstance(s, bool) or not isinstance(s, int) or s < 0:
                raise ConfigError(f"seeds must be non-negative integers, got {s!r}")
        if self.trace_seed is None:
            object.__setattr__(self, "trace_seed", self.seeds[0])

    @property
    def fig3_corruption_rate(self) -> float:
        return self.base.corruption.p_c


@dataclass(frozen=True)
class MetricsCell:
    method: MethodKind
    arrival_rate: float
    corruption_rate: float
    values: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values))


@dataclass
class MetricsReport:
    spec: SweepSpec
    cells: dict = field(default_factory=dict)     # (method, rate, p_c) -> MetricsCell
    traces: dict = field(default_factory=dict)    # (method, rate, p_c, seed) -> RunTrace

    def cell(self, method, arrival_rate, corruption_rate) -> MetricsCell:
        return self.cells[(MethodKind.parse(method), float(arrival_rate), float(corruption_rate))]

    def fig3_rows(self):
        p_c = self.spec.fig3_corruption_rate
        return [(m, r, self.cell(m, r, p_c)) for r in self.spec.arrival_rates for m in self.spec.methods]

    def fig5_rows(self):
        r = self.spec.fig5_arrival_rate
        return [(m, p, self.cell(m, r, p)) for p in self.spec.corruption_rates for m in self.spec.methods]

    def fig3_csv(self) -> str:
        return _csv([FIG3_HEADER] + [(m.value, fmt(r), fmt(c.mean), fmt(c.std)) for m, r, c in self.fig3_rows()])

    def fig5_csv(self) -> str:
        return _csv([FIG5_HEADER] + [(m.value, fmt(p), fmt(c.mean), fmt(c.std)) for m, p, c in self.fig5_rows()])

    def fig4_csv(self) -> str:
        spec = self.spec
        key = (spec.fig5_arrival_rate, spec.fig3_corruption_rate, spec.trace_seed)
        traces = [self.traces[(m, *key)] for m in spec.methods]
        rows = [("t", "lambda_t", "m_t") + tuple(m.value for m in spec.methods)]
        for steps in zip(*(tr.steps for tr in traces)):
            if len({s.m_t for s in steps}) != 1:
                raise RuntimeError(f"request streams diverged at t={steps[0].t}")
            s0 = steps[0]
            rows.append((fmt(s0.t), fmt(s0.lambda_t), fmt(s0.m_t)) + tuple(fmt(s.mean_e2e_prob) for s in steps))
        return _csv(rows)

    def write(self, out_dir) -> list[Path]:
        out_dir = Path(out_dir)
        written = []
        for name, text in (("fig3.csv", self.fig3_csv()), ("fig5.csv", self.fig5_csv()),
                           ("fig4_trace.csv", self.fig4_csv())):
            atomic_write_text(out_dir / name, text)
            written.append(out_dir / name)
        return written


def _cell_config(base: EpisodeConfig, rate, p_c, seed) -> EpisodeConfig:
    return base.replace(traffic=TrafficProcess(base.traffic.total_steps, float(rate)),
                        corruption=CorruptionConfig(float(p_c)), seed=int(seed))


def run_sweep(spec: SweepSpec, keep_traces: bool = False,
              progress: Optional[Callable[[str], None]] = None) -> MetricsReport:
    """Run every (method, rate, corruption, seed) cell needed by fig3/fig4/fig5.

    Methods under one seed share the same request stream, Static models and
    warm-up history, so differences between them are paired.
    """
    cells = [(r, spec.fig3_corruption_rate) for r in spec.arrival_rates]
    cells += [(spec.fig5_arrival_rate, p) for p in spec.corruption_rates]
    cells = list(dict.fromkeys((float(r), float(p)) for r, p in cells))
    trace_key = (float(spec.fig5_arrival_rate), float(spec.fig3_corruption_rate))

    report = MetricsReport(spec)
    values: dict = {}
    for rate, p_c in cells:
        for seed in spec.seeds:
            cfg = _cell_config(spec.base, rate, p_c, seed)
            static = history = None
            if any(m.uses_models for m in spec.methods):
                history = warmup_feedback(cfg)
                static = make_static_models(cfg, history)
            for m in spec.methods:
                trace = run_episode(cfg.replace(method=m), initial_models=static if m.uses_models else None,
                                    history=history)
                p = trace.p_avg
                if p is None:
                    raise ConfigError(f"no requests in cell rate={rate} p_c={p_c} seed={seed}")
                values.setdefault((m, rate, p_c), []).append(p)
                if keep_traces or ((rate, p_c) == trace_key and seed == spec.trace_seed):
                    report.traces[(m, rate, p_c, seed)] = trace
                if progress is not None:
                    progress(f"{m.value:9s} rate={fmt(rate)} p_c={fmt(p_c)} seed={seed} p_avg={p:.4f}")
    report.cells = {k: MetricsCell(k[0], k[1], k[2], tuple(v)) for k, v in values.items()}
    return report


_SWEEP_KEYS = {"methods", "arrival_rates", "corruption_rates", "seeds", "base",
               "fig5_arrival_rate", "trace_seed", "version"}


def parse_sweep(doc: dict, base_dir=None) -> SweepSpec:
    """Sweep file: the keys above plus ``base``, an episode config whose
    ``traffic.arrival_scale`` and ``corruption.p_c`` are overridden per cell."""
    for key in doc:
        if key not in _SWEEP_KEYS:
            raise ConfigError(f"unknown key {key}")
    base_doc = doc.get("base", {})
    if not isinstance(base_doc, dict):
        raise ConfigError("base: expected an object")
    base = parse_episode(base_doc, require=(), base_dir=base_dir).episode
    kwargs = {"base": base}
    for key in ("methods", "arrival_rates", "corruption_rates", "seeds"):
        if key in doc:
            if not isinstance(doc[key], list):
                raise ConfigError(f"{key}: expected a list")
            kwargs[key] = doc[key]
    for key in ("fig5_arrival_rate", "trace_seed"):
        if key in doc:
            kwargs[key] = doc[key]
    try:
        return SweepSpec(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_sweep_spec(path=None, seed_override=None) -> SweepSpec:
    """Read a sweep file (or use defaults); a seed override runs that single seed."""
    spec = parse_sweep(read_json(path), base_dir=Path(path).parent) if path is not None else SweepSpec()
    seed = resolve_seed(seed_override)
    if seed is not None:
        spec = SweepSpec(spec.methods, spec.arrival_rates, spec.corruption_rates, (seed,), spec.base,
                         spec.fig5_arrival_rate, seed)
    return spec


def summarize(report: MetricsReport) -> str:
    buf = io.StringIO()
    for m, r, c in report.fig3_rows():
        buf.write(f"{m.value:9s} arrival_rate={fmt(r):5s} p_avg={c.mean:.4f} +- {c.std:.4f}\n")
    return buf.getvalue()


def paired_differences(report: MetricsReport, a, b, arrival_rate, corruption_rate) -> np.ndarray:
    ca = report.cell(a, arrival_rate, corruption_rate)
    cb = report.cell(b, arrival_rate, corruption_rate)
    return np.asarray(ca.values) - np.asarray(cb.values)


def low_traffic_variance(trace: RunTrace, quantile: float = 0.25) -> float:
    """Variance of per-step mean E2E probability over the lowest-traffic steps."""
    if not trace.steps:
        raise ValueError("empty trace")
    lam = np.array([s.lambda_t for s in trace.steps])
    k = max(1, int(round(quantile * len(lam))))
    low = np.argsort(lam, kind="stable")[:k]
    means = [trace.steps[i].mean_e2e_prob for i in low if trace.steps[i].m_t > 0]
    if len(means) < 2:
        raise ValueError("fewer than two low-traffic steps with requests")
    return float(np.var(means))
