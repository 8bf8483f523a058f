"""
Experiment orchestration: configuration loading, runs and the `mf` command line.
"""

from mflab.experiments.config_loader import ConfigLoader
from mflab.experiments.runner import ExperimentRunner, PhaseTimer, TrainedModel

__all__ = ["ConfigLoader", "ExperimentRunner", "PhaseTimer", "TrainedModel"]
