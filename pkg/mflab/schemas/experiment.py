"""
Experiment and split configuration schemas.
"""

from enum import Enum
from typing import List, Optional, Union

from pydantic import BaseModel, Field, ValidationInfo, field_validator, model_validator

from mflab.schemas.train import GropleConfig, MlcConfig, TrainConfig
from mflab.services.losses import BinaryLossKind
from mflab.services.optimizer import StepRule


class SplitKind(str, Enum):
    """Evaluation protocols."""
    WEAK = "weak"
    STRONG = "strong"
    RANDOM_HOLDOUT = "random_holdout"
    KFOLD = "kfold"


class Method(str, Enum):
    """Factorization methods the runner can drive."""
    BMMMF = "bmmmf"
    MMMF = "mmmf"
    HMF = "hmf"
    PHMF = "phmf"
    PMMMF = "pmmmf"
    MLC_HMF = "mlc-hmf"
    GROPLE = "grople"


COLLABORATIVE_METHODS = frozenset({Method.BMMMF, Method.MMMF, Method.HMF, Method.PHMF, Method.PMMMF})
MULTILABEL_METHODS = frozenset({Method.MLC_HMF, Method.GROPLE})


class SplitSpec(BaseModel):
    """How observed data is divided into training and test parts."""
    kind: SplitKind = SplitKind.RANDOM_HOLDOUT
    held_user_fraction: float = Field(default=0.1, gt=0, lt=1, description="Strong protocol: share of users held out")
    test_fraction: float = Field(default=0.2, gt=0, lt=1, description="Random holdout: share of entries tested")
    k: int = Field(default=5, ge=2, description="Number of folds")
    seed: int = 0


class ExperimentConfig(BaseModel):
    """
    A complete, flat experiment description.

    Every field can be given in a config file or as a `--key value` flag.
    Method-specific fields that do not apply to the chosen method are ignored.
    """

    method: Method

    # Data
    ratings_path: Optional[str] = Field(default=None, description="Rating TSV for collaborative methods")
    features_path: Optional[str] = Field(default=None, description="Feature CSV for multi-label methods")
    labels_path: Optional[str] = Field(default=None, description="Label CSV for multi-label methods")
    sep: str = Field(default="\t", description="Rating file separator ('::' for MovieLens-1M)")
    eachmovie: bool = Field(default=False, description="Map EachMovie scores {0, 0.2, .., 1} to 1..6")
    rating_levels: Optional[int] = Field(default=None, ge=2, description="R; inferred from the data when omitted")

    # Protocol
    split: SplitKind = SplitKind.RANDOM_HOLDOUT
    held_user_fraction: float = Field(default=0.1, gt=0, lt=1)
    test_fraction: float = Field(default=0.2, gt=0, lt=1)
    folds: int = Field(default=5, ge=2)
    seeds: List[int] = Field(default_factory=lambda: [0])
    workers: Optional[int] = Field(default=None, ge=1, description="Internal parallelism; defaults to settings.workers")

    # Shared solver settings
    latent_dim: Optional[int] = Field(default=None, ge=1)
    lam: float = Field(default=1.0, ge=0)
    lam_grid: List[float] = Field(default_factory=list)
    max_iters: Optional[int] = Field(default=None, ge=1)
    rel_tol: float = Field(default=1e-5, gt=0, lt=1)
    step_rule: StepRule = StepRule.CONJUGATE_GRADIENT
    step_size: float = Field(default=0.01, gt=0)
    loss: BinaryLossKind = BinaryLossKind.SMOOTH_HINGE

    # Bi-level and hierarchical
    theta_cut: float = 0.0
    stage_lambdas: Optional[List[float]] = None
    bilevel_stage: Optional[int] = Field(
        default=None, ge=1, description="bmmmf on ordinal data: ratings above this count as +1; defaults to ceil(R/2)"
    )

    # MLC-HMF
    threshold: float = Field(default=0.1, ge=0, le=1)
    max_depth: int = Field(default=5, ge=1)
    min_node_size: int = Field(default=5, ge=1)
    neighbors: int = Field(default=5, ge=1)

    # GroPLE
    n_groups: int = Field(default=10, ge=1)
    lam1: float = Field(default=1e-3, ge=0)
    lam2: float = Field(default=1.0, ge=0)
    alpha: float = Field(default=1.0, ge=0)
    beta: float = Field(default=1e-2, ge=0)
    alpha_grid: List[float] = Field(default_factory=list)
    beta_grid: List[float] = Field(default_factory=list)
    tol: float = Field(default=1e-5, gt=0, lt=1)
    max_outer: int = Field(default=50, ge=1)

    # Evaluation and output
    nmae_divisor: Union[float, str] = Field(default="movielens", description="'movielens', 'eachmovie' or a number")
    model_path: Optional[str] = None
    output: Optional[str] = None

    @field_validator("seeds")
    @classmethod
    def seeds_not_empty(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("At least one seed is required")
        return value

    @model_validator(mode="after")
    def check_method_inputs(self, info: ValidationInfo) -> "ExperimentConfig":
        # Prediction from a saved model may run without the training inputs
        require_inputs = not (info.context or {}).get("partial", False)
        if require_inputs and self.method in COLLABORATIVE_METHODS and not self.ratings_path:
            raise ValueError(f"Method '{self.method.value}' requires ratings_path")
        if require_inputs and self.method in MULTILABEL_METHODS and not (self.features_path and self.labels_path):
            raise ValueError(f"Method '{self.method.value}' requires features_path and labels_path")
        if self.stage_lambdas is not None and any(value < 0 for value in self.stage_lambdas):
            raise ValueError("stage_lambdas must be non-negative")
        return self

    @property
    def is_collaborative(self) -> bool:
        return self.method in COLLABORATIVE_METHODS

    def split_spec(self, seed: int) -> SplitSpec:
        return SplitSpec(
            kind=self.split,
            held_user_fraction=self.held_user_fraction,
            test_fraction=self.test_fraction,
            k=self.folds,
            seed=seed,
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            latent_dim=self.latent_dim or 2,
            lam=self.lam,
            max_iters=self.max_iters or 500,
            rel_tol=self.rel_tol,
            seed=seed,
            step_rule=self.step_rule,
            step_size=self.step_size,
            loss=self.loss,
        )

    def mlc_config(self, seed: int) -> MlcConfig:
        return MlcConfig(
            latent_dim=self.latent_dim,
            threshold=self.threshold,
            max_depth=self.max_depth,
            min_node_size=self.min_node_size,
            neighbors=self.neighbors,
            lam=self.lam,
            max_iters=self.max_iters or 200,
            rel_tol=self.rel_tol,
            seed=seed,
            loss=self.loss,
        )

    def grople_config(self, seed: int) -> GropleConfig:
        return GropleConfig(
            latent_dim=self.latent_dim or 100,
            n_groups=self.n_groups,
            lam1=self.lam1,
            lam2=self.lam2,
            alpha=self.alpha,
            beta=self.beta,
            tol=self.tol,
            max_outer=self.max_outer,
            max_iters=self.max_iters or 500,
            seed=seed,
        )
