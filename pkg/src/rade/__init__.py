"""Risk-aware decomposition of end-to-end SLAs across network domains,
with per-domain monotone acceptance models learned online from feedback."""

from .decomposer import DecomposerConfig, decompose, decompose_opt, decompose_random
from .memory import FeedbackSample, FifoBuffer
from .risk_model import MonotoneRiskClassifier, OgdConfig, RiskModelParams
from .runtime import EpisodeConfig, MethodKind, RunTrace, make_static_models, p_avg, run_episode
from .simulation import AnalyticDomainModel, CorruptionConfig, TrafficProcess
from .slo import Decomposition, SloVector, compose, is_valid_for, strictness_leq

__version__ = "0.1.0"

__all__ = [
    "AnalyticDomainModel", "CorruptionConfig", "DecomposerConfig", "Decomposition", "EpisodeConfig",
    "FeedbackSample", "FifoBuffer", "MethodKind", "MonotoneRiskClassifier", "OgdConfig",
    "RiskModelParams", "RunTrace", "SloVector", "TrafficProcess", "compose", "decompose",
    "decompose_opt", "decompose_random", "is_valid_for", "make_static_models", "p_avg",
    "run_episode", "strictness_leq",
]
