"""
Pydantic schemas for solver settings, experiments, scores and reports.
"""

from mflab.schemas.train import GropleConfig, MlcConfig, TrainConfig
from mflab.schemas.experiment import (
    COLLABORATIVE_METHODS,
    MULTILABEL_METHODS,
    ExperimentConfig,
    Method,
    SplitKind,
    SplitSpec,
)
from mflab.schemas.evaluation import NMAE_DIVISORS, CfEval, MlcEval
from mflab.schemas.report import MetricSummary, RunEntry, RunReport

__all__ = [
    "TrainConfig",
    "MlcConfig",
    "GropleConfig",
    "ExperimentConfig",
    "Method",
    "SplitKind",
    "SplitSpec",
    "COLLABORATIVE_METHODS",
    "MULTILABEL_METHODS",
    "CfEval",
    "MlcEval",
    "NMAE_DIVISORS",
    "RunEntry",
    "MetricSummary",
    "RunReport",
]
