import numpy as np
import pytest

from rade.config import ConfigError
from rade.harness import (
    RUN_HEADER,
    MetricsReport,
    SweepSpec,
    atomic_write_text,
    fmt,
    low_traffic_variance,
    paired_differences,
    parse_sweep,
    run_sweep,
    trace_csv,
)
from rade.runtime import EpisodeConfig, MethodKind, RunTrace, StaticWarmup, StepRecord, run_episode
from rade.simulation import TrafficProcess

TINY = EpisodeConfig(traffic=TrafficProcess(30, 0.5), static_warmup=StaticWarmup(epochs=10))


def test_fmt():
    assert fmt(None) == ""
    assert fmt(3) == "3"
    assert fmt(np.int64(7)) == "7"
    assert fmt(0.123456789) == "0.123457"
    assert fmt(1.0) == "1"
    assert fmt(1e-7) == "1e-07"


def test_run_csv_schema():
    trace = run_episode(TINY.replace(method="random", traffic=TrafficProcess(30, 0.2)))
    lines = trace_csv(trace).splitlines()
    assert lines[0] == ",".join(RUN_HEADER)
    assert len(lines) == 31
    for line, s in zip(lines[1:], trace.steps):
        cells = line.split(",")
        assert cells[3] == "random"
        assert (cells[4] == "") == (s.m_t == 0)


def test_single_cell_sweep():
    spec = SweepSpec(methods=["random"], arrival_rates=[0.5], corruption_rates=[0.0], seeds=[0], base=TINY)
    report = run_sweep(spec)
    lines = report.fig3_csv().splitlines()
    assert lines[0] == "method,arrival_rate,p_avg_mean,p_avg_std"
    assert len(lines) == 2
    assert lines[1].startswith("random,0.5,")
    assert report.fig5_csv().splitlines()[0] == "method,corruption_rate,p_avg_mean,p_avg_std"


def test_opt_is_row_maximum():
    spec = SweepSpec(arrival_rates=[0.3, 0.7], corruption_rates=[0.0], seeds=[0, 1], base=TINY)
    report = run_sweep(spec)
    for rate in spec.arrival_rates:
        means = {m: report.cell(m, rate, 0.0).mean for m in spec.methods}
        assert max(means.values()) == means[MethodKind.OPT]
    d = paired_differences(report, "opt", "random", 0.3, 0.0)
    assert d.shape == (2,) and np.all(d >= 0)


def test_sweep_writes_files(tmp_path):
    spec = SweepSpec(methods=["random", "opt"], arrival_rates=[0.5], corruption_rates=[0.0, 0.2],
                     seeds=[0], base=TINY)
    written = run_sweep(spec).write(tmp_path)
    assert sorted(p.name for p in written) == ["fig3.csv", "fig4_trace.csv", "fig5.csv"]
    fig4 = (tmp_path / "fig4_trace.csv").read_text().splitlines()
    assert fig4[0] == "t,lambda_t,m_t,random,opt"
    assert len(fig4) == 31
    assert len((tmp_path / "fig5.csv").read_text().splitlines()) == 1 + 2 * 2


def test_fig4_rejects_diverged_streams():
    spec = SweepSpec(methods=["random", "opt"], arrival_rates=[0.5], corruption_rates=[0.0], seeds=[0], base=TINY)
    report = MetricsReport(spec)
    report.traces[(MethodKind.RANDOM, 0.5, 0.0, 0)] = RunTrace(MethodKind.RANDOM, 0, steps=[StepRecord(0, 0.5, (0.1,))])
    report.traces[(MethodKind.OPT, 0.5, 0.0, 0)] = RunTrace(MethodKind.OPT, 0, steps=[StepRecord(0, 0.5, ())])
    with pytest.raises(RuntimeError, match="diverged"):
        report.fig4_csv()


def test_std_is_population():
    spec = SweepSpec(methods=["random"], arrival_rates=[0.5], corruption_rates=[0.0], seeds=[0, 1, 2], base=TINY)
    cell = run_sweep(spec).cell("random", 0.5, 0.0)
    assert cell.std == pytest.approx(np.std(cell.values, ddof=0), abs=0)


def test_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec(seeds=[])
    with pytest.raises(ConfigError):
        SweepSpec(corruption_rates=[1.5])
    with pytest.raises(ConfigError):
        SweepSpec(arrival_rates=[-0.1])
    with pytest.raises(ConfigError):
        SweepSpec(methods=["best"])


def test_parse_sweep():
    spec = parse_sweep({"methods": ["rade", "opt"], "seeds": [3], "base": {"traffic.total_steps": 12}})
    assert spec.methods == (MethodKind.RADE, MethodKind.OPT)
    assert spec.base.traffic.total_steps == 12
    assert spec.trace_seed == 3
    with pytest.raises(ConfigError, match="unknown key"):
        parse_sweep({"rates": [0.5]})
    with pytest.raises(ConfigError):
        parse_sweep({"seeds": 3})


def test_atomic_write(tmp_path):
    p = tmp_path / "sub" / "x.csv"
    atomic_write_text(p, "a\n")
    atomic_write_text(p, "b\n")
    assert p.read_text() == "b\n"
    assert [q.name for q in p.parent.iterdir()] == ["x.csv"]


def test_low_traffic_variance():
    steps = [StepRecord(t, lam, (p,)) for t, (lam, p) in enumerate(
        [(0.1, 0.2), (0.9, 0.5), (0.2, 0.4), (0.8, 0.9), (0.15, 0.0), (0.7, 0.1), (0.3, 0.3), (0.95, 0.3)])]
    # lowest quartile (2 of 8 steps) is lambda 0.1 and 0.15: values 0.2 and 0.0
    assert low_traffic_variance(RunTrace(MethodKind.RANDOM, 0, steps=steps)) == pytest.approx(0.01, abs=1e-15)
    with pytest.raises(ValueError):
        low_traffic_variance(RunTrace(MethodKind.RANDOM, 0, steps=[]))
