"""
Solver configuration schemas.
"""

import math
from typing import Optional

from pydantic import BaseModel, Field, field_validator

from mflab.services.losses import BinaryLossKind, DIFFERENTIABLE_LOSSES
from mflab.services.optimizer import StepRule


def _check_differentiable(value: BinaryLossKind) -> BinaryLossKind:
    if value not in DIFFERENTIABLE_LOSSES:
        raise ValueError(f"Training loss must be differentiable, got '{value.value}'")
    return value


class TrainConfig(BaseModel):
    """Settings for the MMMF-family solvers (bi-level, ordinal, hierarchical, proximal)."""

    latent_dim: int = Field(default=2, ge=1, description="Latent dimension d")
    lam: float = Field(default=1.0, ge=0, description="Frobenius regularization weight")
    max_iters: int = Field(default=500, ge=1, description="Iteration cap")
    rel_tol: float = Field(default=1e-5, gt=0, lt=1, description="Relative objective change stopping tolerance")
    seed: int = Field(default=0, description="Initialization seed")
    step_rule: StepRule = Field(default=StepRule.CONJUGATE_GRADIENT, description="fixed or cg")
    step_size: float = Field(default=0.01, gt=0, description="Initial step length c for the fixed rule")
    restart_every: Optional[int] = Field(
        default=None, ge=1, description="Conjugate gradient restart period; defaults to N + M"
    )
    loss: BinaryLossKind = Field(default=BinaryLossKind.SMOOTH_HINGE, description="Margin loss surrogate")

    @field_validator("loss")
    @classmethod
    def loss_must_be_differentiable(cls, value: BinaryLossKind) -> BinaryLossKind:
        return _check_differentiable(value)


class MlcConfig(BaseModel):
    """Settings for hierarchical multi-label embedding."""

    latent_dim: Optional[int] = Field(default=None, ge=1, description="d; defaults to ceil(0.5 L)")
    threshold: float = Field(default=0.1, ge=0, le=1, description="Per-instance hamming loss allowed for retention")
    max_depth: int = Field(default=5, ge=1, description="Depth limit h")
    min_node_size: int = Field(default=5, ge=1, description="Smallest cluster that is still trained")
    neighbors: int = Field(default=5, ge=1, description="K nearest retained instances used for voting")
    lam: float = Field(default=1.0, ge=0, description="Regularization weight, fixed across nodes")
    max_iters: int = Field(default=200, ge=1)
    rel_tol: float = Field(default=1e-5, gt=0, lt=1)
    seed: int = 0
    loss: BinaryLossKind = BinaryLossKind.SMOOTH_HINGE

    @field_validator("loss")
    @classmethod
    def loss_must_be_differentiable(cls, value: BinaryLossKind) -> BinaryLossKind:
        return _check_differentiable(value)

    def resolved_latent_dim(self, n_labels: int) -> int:
        return self.latent_dim or max(1, math.ceil(0.5 * n_labels))


class GropleConfig(BaseModel):
    """Settings for group-preserving label embedding."""

    latent_dim: int = Field(default=100, ge=1, description="Latent dimension d")
    n_groups: int = Field(default=10, ge=1, description="Number of label groups K")
    lam1: float = Field(default=1e-3, ge=0, description="Ridge weight on U")
    lam2: float = Field(default=1.0, ge=0, description="Row-sparsity weight on each V^k")
    alpha: float = Field(default=1.0, ge=0, description="Latent-correlation weight in the feature map")
    beta: float = Field(default=1e-2, ge=0, description="L1 weight in the feature map")
    tol: float = Field(default=1e-5, gt=0, lt=1)
    max_outer: int = Field(default=50, ge=1, description="Alternating U / V rounds")
    max_iters: int = Field(default=500, ge=1, description="Accelerated proximal gradient iterations per solve")
    seed: int = 0
