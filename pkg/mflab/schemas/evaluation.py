"""
Evaluation result schemas.
"""

from pydantic import BaseModel, Field


# Named NMAE divisors: the mean absolute error of uniformly random guessing
NMAE_DIVISORS = {
    "movielens": 1.6,
    "eachmovie": 1.944,
}


class CfEval(BaseModel):
    """Collaborative filtering scores over a set of held-out ratings."""
    mae: float = Field(..., ge=0)
    rmse: float = Field(..., ge=0)
    fre: float = Field(..., ge=0, description="Frobenius relative error")
    nmae: float = Field(..., ge=0)
    zero_one: float = Field(..., ge=0, le=1, description="Fraction of ratings predicted wrongly")
    nmae_divisor: float = Field(..., gt=0)
    n_entries: int = Field(..., ge=1)


class MlcEval(BaseModel):
    """Multi-label classification scores."""
    hamming_loss: float = Field(..., ge=0, le=1)
    accuracy: float = Field(..., ge=0, le=1)
    subset_accuracy: float = Field(..., ge=0, le=1)
    example_f1: float = Field(..., ge=0, le=1)
    macro_f1: float = Field(..., ge=0, le=1)
    micro_f1: float = Field(..., ge=0, le=1)
