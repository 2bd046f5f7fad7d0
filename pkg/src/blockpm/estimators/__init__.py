"""Likelihood estimators conforming to the block-estimator interface."""

from .base import BlockEstimator, CountingEstimator, LogLikEstimate
from .toy import ToyGaussianModel, toy_block_z

__all__ = [
    "BlockEstimator",
    "CountingEstimator",
    "LogLikEstimate",
    "ToyGaussianModel",
    "toy_block_z",
]
