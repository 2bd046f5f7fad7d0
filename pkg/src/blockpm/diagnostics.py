"""Chain quality metrics: IACT, summaries, and z-correlation diagnostics."""

from __future__ import annotations

import numpy as np

from .exceptions import DegenerateChainError
from .sampler import ChainOutput

DEFAULT_LAG_CAP = 1000


def autocorrelations(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample autocorrelations rho_1..rho_max_lag (biased normalization)."""
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    x = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(x, n=nfft)
    acov = np.fft.irfft(spec * np.conj(spec))[: max_lag + 1] / n
    if acov[0] <= 0.0:
        raise DegenerateChainError("degenerate chain: zero variance")
    return acov[1:] / acov[0]


def iact(series: np.ndarray, lag_cap: int = DEFAULT_LAG_CAP) -> float:
    """Integrated autocorrelation time 1 + 2*sum of sample autocorrelations.

    The sum is truncated at min(lag_cap, n//10) lags; no adaptive window is
    applied, so values may undershoot 1 by noise on near-white series.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size < 2:
        raise DegenerateChainError("need at least 2 points")
    cap = max(1, min(int(lag_cap), x.size // 10))
    rho = autocorrelations(x, cap)
    return float(1.0 + 2.0 * rho.sum())


def summarize(
    output: ChainOutput,
    varpi: float = 0.5,
    lag_cap: int = DEFAULT_LAG_CAP,
    sigma2: float | None = None,
) -> dict:
    """Deterministic summary of a chain: acceptance, moments, IACT, TNV.

    TNV is mean IACT times the run's wall-clock seconds.  The empirical
    computing time divides mean IACT by sigma^(1/varpi); pass ``sigma2``
    when the estimator's log-error variance is known by construction (the
    z-trace variance is used otherwise, and is a poor estimate when z
    itself mixes slowly).
    """
    if output.num_draws < 2:
        raise DegenerateChainError("no post-burn-in draws to summarize")
    per_param_iact: list[float | None] = []
    for j in range(output.draws.shape[1]):
        try:
            per_param_iact.append(iact(output.draws[:, j], lag_cap))
        except DegenerateChainError:
            per_param_iact.append(None)
    finite = [v for v in per_param_iact if v is not None]
    if not finite:
        raise DegenerateChainError("every parameter series is degenerate")
    mean_iact = float(np.mean(finite))
    cpu_seconds = float(output.wall_seconds)
    z_var = float(output.z_trace.var()) if sigma2 is None else float(sigma2)
    if z_var > 0.0:
        empirical_ct = mean_iact / z_var ** (1.0 / (2.0 * varpi))
    else:
        empirical_ct = None
    return {
        "param_names": list(output.param_names),
        "num_draws": int(output.num_draws),
        "acceptance_rate": float(output.accept_flags.mean()),
        "posterior_mean": output.draws.mean(axis=0).tolist(),
        "posterior_sd": output.draws.std(axis=0, ddof=1).tolist(),
        "iact": per_param_iact,
        "mean_iact": mean_iact,
        "cpu_seconds": cpu_seconds,
        "tnv": mean_iact * cpu_seconds,
        "empirical_ct": empirical_ct,
        "config_digest": None,
    }


def corr_z_pairs(output: ChainOutput, min_pairs: int = 1000) -> float:
    """Sample correlation between the current and proposed log-estimates
    across proposals (zero-likelihood proposals are excluded)."""
    mask = np.isfinite(output.z_proposed) & np.isfinite(output.z_current)
    if int(mask.sum()) < min_pairs:
        raise DegenerateChainError(f"need at least {min_pairs} proposal pairs")
    return float(np.corrcoef(output.z_current[mask], output.z_proposed[mask])[0, 1])


def corr_theta_z(output: ChainOutput, h=0) -> float:
    """Posterior correlation between h(theta) and the log-estimate trace.

    ``h`` is a parameter index or a callable mapping the draws matrix to a
    scalar series.
    """
    series = h(output.draws) if callable(h) else output.draws[:, int(h)]
    series = np.asarray(series, dtype=np.float64)
    if series.std() == 0.0 or output.z_trace.std() == 0.0:
        raise DegenerateChainError("degenerate series in correlation")
    return float(np.corrcoef(series, output.z_trace)[0, 1])


def ratio_table(target_summary: dict, baseline_summary: dict) -> dict:
    """Performance ratios of a target sampler relative to a baseline."""
    out = {
        "target_acceptance_rate": target_summary["acceptance_rate"],
        "baseline_acceptance_rate": baseline_summary["acceptance_rate"],
        "iact_ratio": target_summary["mean_iact"] / baseline_summary["mean_iact"],
    }
    if baseline_summary["cpu_seconds"] > 0.0:
        out["cpu_ratio"] = target_summary["cpu_seconds"] / baseline_summary["cpu_seconds"]
        out["tnv_ratio"] = (
            out["iact_ratio"] * out["cpu_ratio"]
            if baseline_summary["tnv"] == 0.0 or target_summary["tnv"] == 0.0
            else target_summary["tnv"] / baseline_summary["tnv"]
        )
    else:
        out["cpu_ratio"] = None
        out["tnv_ratio"] = None
    return out
