"""Estimator interface shared by all likelihood estimators.

An estimator owns the block structure of its auxiliary randomness and maps
(theta, u) to a log-likelihood estimate split into per-block contributions
plus an optional correction term (used by the subsampling estimator's
variance adjustment).  Per-block values are pure functions of theta and the
block contents, which is what makes block updates valid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import EstimatorFailure
from ..randomness import BlockedRandomness, BlockLayout


@dataclass(frozen=True)
class LogLikEstimate:
    """Log-likelihood estimate: total = sum(per_block) + correction."""

    total: float
    per_block: np.ndarray
    correction: float = 0.0

    @staticmethod
    def from_blocks(per_block: np.ndarray, correction: float = 0.0) -> "LogLikEstimate":
        per_block = np.asarray(per_block, dtype=np.float64)
        if np.isnan(per_block).any() or np.isnan(correction):
            raise EstimatorFailure("likelihood estimate is NaN")
        return LogLikEstimate(
            total=float(per_block.sum() + correction),
            per_block=per_block,
            correction=float(correction),
        )


class BlockEstimator:
    """Base class: subclasses define the layout and per-block evaluation.

    ``loglik`` may be overridden with a vectorized all-blocks path; it must
    agree with looping ``per_block_loglik`` over blocks.
    """

    param_names: tuple[str, ...]

    def layout(self) -> BlockLayout:
        raise NotImplementedError

    @property
    def num_blocks(self) -> int:
        return self.layout().num_blocks

    def log_prior(self, theta: np.ndarray) -> float:
        raise NotImplementedError

    def per_block_loglik(self, theta: np.ndarray, k: int, values: list[np.ndarray]) -> float:
        raise NotImplementedError

    def correction(self, theta: np.ndarray, br: BlockedRandomness) -> float:
        return 0.0

    def loglik(self, theta: np.ndarray, br: BlockedRandomness) -> LogLikEstimate:
        per_block = np.array(
            [self.per_block_loglik(theta, k, br.values(k)) for k in range(br.num_blocks)]
        )
        return LogLikEstimate.from_blocks(per_block, self.correction(theta, br))

    def initial_theta(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def sample_prior_theta(self, rng: np.random.Generator) -> np.ndarray:
        """Draw from the prior; needed only by independence proposals."""
        raise NotImplementedError


class CountingEstimator:
    """Wrapper counting full-likelihood evaluations (used by invariant tests)."""

    def __init__(self, inner: BlockEstimator):
        self.inner = inner
        self.eval_count = 0

    def __getattr__(self, name):
        return getattr(self.inner, name)

    @property
    def num_blocks(self) -> int:
        return self.inner.num_blocks

    def loglik(self, theta, br) -> LogLikEstimate:
        self.eval_count += 1
        return self.inner.loglik(theta, br)
