"""
Run report schema.
"""

import hashlib
import json
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field


class RunEntry(BaseModel):
    """Scores and timings of one seed (and fold, when cross-validating)."""
    seed: int
    fold: Optional[int] = None
    metrics: Dict[str, float]
    timings: Dict[str, float] = Field(default_factory=dict, description="Wall-clock seconds per phase")
    details: Dict[str, Any] = Field(default_factory=dict)


class MetricSummary(BaseModel):
    """Mean and sample standard deviation of one metric across runs."""
    mean: float
    std: float
    n: int


class RunReport(BaseModel):
    """Machine-readable record of an experiment."""
    version: str
    method: str
    config: Dict[str, Any]
    config_hash: str
    runs: List[RunEntry]
    summary: Dict[str, MetricSummary]
    total_seconds: float

    @staticmethod
    def hash_config(config: Dict[str, Any]) -> str:
        """SHA-256 of the canonical (sorted-key) JSON form of a config."""
        canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @staticmethod
    def summarize(runs: List[RunEntry]) -> Dict[str, MetricSummary]:
        """Per-metric mean and std (ddof=1 with more than one run)."""
        names = sorted({name for run in runs for name in run.metrics})
        summary = {}
        for name in names:
            values = np.array([run.metrics[name] for run in runs if name in run.metrics], dtype=np.float64)
            std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
            summary[name] = MetricSummary(mean=float(np.mean(values)), std=std, n=int(values.size))
        return summary

    def metric_section(self) -> Dict[str, Any]:
        """Everything except wall-clock fields; identical for identical config and seeds."""
        return {
            "runs": [run.model_dump(exclude={"timings"}) for run in self.runs],
            "summary": {name: item.model_dump() for name, item in self.summary.items()},
        }
