"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid sampler, randomness, or experiment configuration."""


class EstimatorFailure(RuntimeError):
    """A likelihood estimator produced an unusable (NaN) value."""


class DegenerateChainError(ValueError):
    """A chain or series is too degenerate to diagnose."""
