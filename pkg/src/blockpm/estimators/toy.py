"""Synthetic estimator with exactly normal log-likelihood error.

Each block contributes z_k = -s2/2 + s*eta_k from a single stored normal
eta_k, so the total error z is N(-sigma^2/2, sigma^2) with sigma^2 = G*s2,
exp(z_k) has mean 1, and every quantity the tuning theory predicts
(acceptance rates, correlation between successive estimates, computing
time) can be checked against a sampler run with no model noise in the way.
The parameter is a standalone N(0,1) coordinate whose posterior equals its
prior; proposing it from the prior makes the acceptance probability exactly
min(1, exp(z - z')).
"""

from __future__ import annotations

import numpy as np

from ..randomness import KIND_NORMAL, BlockLayout, UnitShape
from .base import BlockEstimator, LogLikEstimate


def toy_block_z(sigma_block: float, eta) -> np.ndarray:
    """Per-block error z_k = -sigma_block^2/2 + sigma_block * eta."""
    return -0.5 * sigma_block**2 + sigma_block * np.asarray(eta, dtype=np.float64)


class ToyGaussianModel(BlockEstimator):
    """G-block toy target with per-block error variance ``block_variance``."""

    param_names = ("theta",)

    def __init__(self, num_blocks: int, block_variance: float):
        if num_blocks < 1:
            raise ValueError("need at least one block")
        if block_variance <= 0.0:
            raise ValueError("block variance must be positive")
        self.block_variance = float(block_variance)
        self.sigma_block = float(np.sqrt(block_variance))
        self._layout = BlockLayout.uniform_blocks(
            KIND_NORMAL, num_blocks, UnitShape(1, 1)
        )

    def layout(self) -> BlockLayout:
        return self._layout

    @property
    def sigma2_total(self) -> float:
        return self.block_variance * self._layout.num_blocks

    def log_prior(self, theta: np.ndarray) -> float:
        return float(-0.5 * theta[0] ** 2 - 0.5 * np.log(2.0 * np.pi))

    def per_block_loglik(self, theta, k, values) -> float:
        return float(toy_block_z(self.sigma_block, values[0][0, 0]))

    def loglik(self, theta, br) -> LogLikEstimate:
        per_block = toy_block_z(self.sigma_block, br.scalar_values())
        total = float(per_block.sum())
        if np.isnan(total):
            return LogLikEstimate.from_blocks(per_block)
        return LogLikEstimate(total=total, per_block=per_block)

    def true_loglik(self, theta) -> float:
        """The estimated quantity is identically 1 on the natural scale."""
        return 0.0

    def initial_theta(self, rng) -> np.ndarray:
        return rng.standard_normal(1)

    def sample_prior_theta(self, rng) -> np.ndarray:
        return rng.standard_normal(1)

    def sample_z_batch(self, theta, n: int, rng) -> np.ndarray:
        """n independent draws of the total error z (for unbiasedness checks)."""
        eta = rng.standard_normal((n, self._layout.num_blocks))
        return toy_block_z(self.sigma_block, eta).sum(axis=1)
