"""Command-line entry point: ``rade run | sweep | train-static | gradcheck``."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import __version__
from .config import episode_to_dict, load_episode_config
from .gradcheck import DEFAULT_CONFIGS, gradcheck
from .harness import atomic_write_text, load_sweep_spec, run_sweep, summarize, write_trace_csv
from .memory import FeedbackLog
from .risk_model import load_params, params_to_dict
from .runtime import InsufficientDataError, make_static_models, run_episode

log = logging.getLogger("rade")


def _setup_logging(verbose: bool):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _fail(exc) -> click.ClickException:
    return click.ClickException(str(exc))


config_opt = click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON config file.")
seed_opt = click.option("--seed", type=click.IntRange(min=0), default=None,
                        help="Override the config seed (also settable via RADE_SEED).")
verbose_opt = click.option("--verbose", "-v", is_flag=True, help="Log progress to stderr.")


@click.group()
@click.version_option(__version__, prog_name="rade")
def main():
    """Online risk-aware SLA decomposition experiments."""


@main.command()
@config_opt
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Trace CSV to write.")
@seed_opt
@verbose_opt
@click.option("--feedback-log", type=click.Path(dir_okay=False), default=None,
              help="Also append every feedback sample to this JSON-lines file.")
def run(config_path, out_path, seed, verbose, feedback_log):
    """Simulate one episode and write its per-step trace."""
    _setup_logging(verbose)
    if config_path is None:
        raise click.UsageError("--config is required")
    try:
        loaded = load_episode_config(config_path, seed)
        cfg = loaded.episode
        models = None
        if loaded.static_models is not None and cfg.method.uses_models:
            models = load_params(loaded.static_models)
        log.info("running %s, seed %d, %d steps", cfg.method.value, cfg.seed, cfg.traffic.total_steps)
        if feedback_log:
            with FeedbackLog(feedback_log) as fl:
                trace = run_episode(cfg, initial_models=models, feedback_log=fl)
        else:
            trace = run_episode(cfg, initial_models=models)
        write_trace_csv(trace, out_path)
    except (ValueError, InsufficientDataError, OSError) as exc:
        raise _fail(exc) from exc
    p = trace.p_avg
    click.echo(f"{cfg.method.value}: p_avg={'n/a' if p is None else format(p, '.6g')} "
               f"over {len(trace)} steps -> {out_path}")


@main.command()
@config_opt
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Directory for fig3.csv, fig5.csv and fig4_trace.csv.")
@seed_opt
@verbose_opt
def sweep(config_path, out_dir, seed, verbose):
    """Run the method comparison over arrival and corruption rates."""
    _setup_logging(verbose)
    try:
        spec = load_sweep_spec(config_path, seed)
        report = run_sweep(spec, progress=log.info)
        written = report.write(out_dir)
    except (ValueError, InsufficientDataError, OSError) as exc:
        raise _fail(exc) from exc
    click.echo(summarize(report), nl=False)
    for path in written:
        click.echo(f"wrote {path}")


@main.command("train-static")
@config_opt
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Parameter file (JSON) to write.")
@seed_opt
@verbose_opt
def train_static(config_path, out_path, seed, verbose):
    """Train the Static risk models from a Random warm-up episode."""
    _setup_logging(verbose)
    if config_path is None:
        raise click.UsageError("--config is required")
    try:
        cfg = load_episode_config(config_path, seed).episode
        models = make_static_models(cfg)
        doc = {"format": "rade-risk-model-set", "version": 1, "episode": episode_to_dict(cfg),
               "models": [params_to_dict(m) for m in models]}
        atomic_write_text(out_path, json.dumps(doc, indent=1) + "\n")
    except (ValueError, InsufficientDataError, OSError) as exc:
        raise _fail(exc) from exc
    click.echo(f"trained {len(models)} models (warm-up seed {cfg.warmup_seed}) -> {out_path}")


@main.command("gradcheck")
@config_opt
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write the report as JSON here.")
@seed_opt
@verbose_opt
@click.option("--configs", "n_configs", type=click.IntRange(min=1), default=DEFAULT_CONFIGS,
              show_default=True, help="Number of random model/batch configurations.")
def gradcheck_cmd(config_path, out_path, seed, verbose, n_configs):
    """Check the analytic gradient against central finite differences."""
    _setup_logging(verbose)
    tolerance = 1e-4
    if config_path is not None:
        try:
            doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise _fail(f"cannot read {config_path}: {exc}") from exc
        unknown = set(doc) - {"configs", "tolerance", "seed"}
        if unknown:
            raise _fail(f"unknown key {sorted(unknown)[0]}")
        n_configs = int(doc.get("configs", n_configs))
        tolerance = float(doc.get("tolerance", tolerance))
        seed = doc.get("seed", 0) if seed is None else seed
    report = gradcheck(seed=0 if seed is None else seed, n_configs=n_configs, tolerance=tolerance)
    click.echo(report.summary())
    if out_path:
        atomic_write_text(out_path, json.dumps({
            "passed": report.passed, "max_rel_error": report.max_rel_error,
            "tolerance": report.tolerance, "n_configs": report.n_configs,
            "n_coordinates": report.n_coordinates, "worst_config": report.worst_config,
            "worst_param": report.worst_param}, indent=1) + "\n")
    if not report.passed:
        sys.exit(1)
