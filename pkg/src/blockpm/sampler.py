"""Metropolis-Hastings on the extended space (theta, u).

One iteration proposes theta jointly with a move of the auxiliary
randomness u and accepts or rejects both together.  The three refresh
strategies differ only in the u-move:

- block (bpm):   redraw exactly one uniformly chosen block of u;
- independent (ipm): redraw every block;
- correlated (cpm):  Crank-Nicolson move of all underlying normals.

In all three cases the u-proposal is reversible with respect to the prior
law of u, so its density cancels from the acceptance ratio: a block refresh
draws from the block's own prior (the remaining blocks sit in delta
measures on both sides of the ratio), and the Crank-Nicolson kernel
satisfies detailed balance with respect to the standard normal law.  The
acceptance probability therefore only involves the parameter prior, the
two likelihood estimates, and the theta-proposal ratio.

Rejection restores theta, u, and the cached estimate bit-exactly; the
cached estimate at the current state is never recomputed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .estimators.base import BlockEstimator, LogLikEstimate
from .exceptions import ConfigurationError, EstimatorFailure
from .randomness import MC, RQMC, BlockedRandomness, keyed_generator

IPM = "ipm"
CPM = "cpm"
BPM = "bpm"

PROPOSAL_RW = "rw"
PROPOSAL_INDEPENDENT = "independent"
PROPOSAL_FIXED = "fixed"

_STREAM_CHAIN = 0x11


@dataclass
class ProposalConfig:
    """Theta-proposal settings.

    ``rw`` is an adaptive Gaussian random walk with componentwise scales;
    a single log-scale multiplier is adapted by Robbins-Monro toward
    ``target_accept`` during burn-in and frozen afterward.  ``independent``
    proposes from the model prior (the idealized proposal used by the
    tuning theory).  ``fixed`` keeps theta constant, reducing the chain to
    a pure u-move (useful for estimator diagnostics).
    """

    kind: str = PROPOSAL_RW
    scales: float | np.ndarray = 0.1
    target_accept: float = 0.15
    adapt: bool = True
    adapt_decay: float = 0.6

    def scale_vector(self, dim: int) -> np.ndarray:
        scales = np.asarray(self.scales, dtype=np.float64)
        if scales.ndim == 0:
            scales = np.full(dim, float(scales))
        if scales.shape != (dim,) or not np.all(scales > 0):
            raise ConfigurationError("proposal scales must be positive, one per parameter")
        return scales


@dataclass
class SamplerConfig:
    """Which sampler to run and how to drive its randomness."""

    kind: str = BPM
    rng_kind: str = MC
    cpm_correlation: float = 0.9999
    proposal: ProposalConfig = field(default_factory=ProposalConfig)
    seed: int = 0
    init_retries: int = 100

    def validate(self, num_blocks: int) -> None:
        if self.kind not in (IPM, CPM, BPM):
            raise ConfigurationError(f"unknown sampler kind {self.kind!r}")
        if self.rng_kind not in (MC, RQMC):
            raise ConfigurationError(f"unknown rng kind {self.rng_kind!r}")
        if num_blocks < 1:
            raise ConfigurationError("need at least one block")
        # bpm with a single block degenerates to ipm (same keyed streams);
        # it is allowed so the equivalence is verifiable.
        if self.kind == CPM:
            if self.rng_kind == RQMC:
                raise ConfigurationError(
                    "correlated updates would destroy scrambled-net uniformity; "
                    "use mc randomness with cpm"
                )
            if not 0.0 <= self.cpm_correlation < 1.0:
                raise ConfigurationError("cpm correlation must be in [0, 1)")
        if self.proposal.kind not in (PROPOSAL_RW, PROPOSAL_INDEPENDENT, PROPOSAL_FIXED):
            raise ConfigurationError(f"unknown proposal kind {self.proposal.kind!r}")

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rng_kind": self.rng_kind,
            "cpm_correlation": self.cpm_correlation,
            "proposal": {
                "kind": self.proposal.kind,
                "scales": np.asarray(self.proposal.scales).tolist(),
                "target_accept": self.proposal.target_accept,
                "adapt": self.proposal.adapt,
                "adapt_decay": self.proposal.adapt_decay,
            },
            "seed": self.seed,
            "init_retries": self.init_retries,
        }


@dataclass
class ChainState:
    """Current point of the extended chain; cached_loglik was evaluated at
    exactly (theta, randomness)."""

    theta: np.ndarray
    randomness: BlockedRandomness
    cached_loglik: LogLikEstimate
    iteration: int = 0


@dataclass
class ChainOutput:
    """Post-burn-in traces of one run plus run metadata."""

    param_names: tuple[str, ...]
    draws: np.ndarray
    accept_flags: np.ndarray
    block_trace: np.ndarray
    z_trace: np.ndarray
    z_current: np.ndarray
    z_proposed: np.ndarray
    wall_ms: np.ndarray
    wall_seconds: float
    meta: dict

    @property
    def num_draws(self) -> int:
        return self.draws.shape[0]


def select_block(rng: np.random.Generator, num_blocks: int) -> int:
    """Uniformly pick the block to refresh; 1-based.  G=1 consumes no draw."""
    if num_blocks < 1:
        raise ConfigurationError("need at least one block")
    if num_blocks == 1:
        return 1
    return int(rng.integers(num_blocks)) + 1


def mh_accept_ratio(
    current: ChainState,
    proposed_theta: np.ndarray,
    proposed_loglik: LogLikEstimate,
    log_prior_fn,
    log_q_ratio: float = 0.0,
) -> float:
    """min(1, exp(...)) acceptance probability of the joint move.

    NaN anywhere is a hard error; a proposal with zero estimated likelihood
    (total = -inf) yields probability 0.
    """
    log_alpha = _log_accept_ratio(
        log_prior_fn(current.theta) + current.cached_loglik.total,
        log_prior_fn(proposed_theta) + proposed_loglik.total,
        log_q_ratio,
    )
    return float(np.exp(min(0.0, log_alpha)))


def _log_accept_ratio(logpost_cur: float, logpost_prop: float, log_q_ratio: float) -> float:
    if np.isnan(logpost_cur) or np.isnan(logpost_prop) or np.isnan(log_q_ratio):
        raise EstimatorFailure("NaN in acceptance-ratio inputs")
    if logpost_prop == -np.inf:
        return -np.inf
    log_alpha = logpost_prop - logpost_cur + log_q_ratio
    if np.isnan(log_alpha):
        raise EstimatorFailure("acceptance ratio is NaN")
    return log_alpha


def _propose_theta(state, model, proposal: ProposalConfig, scales, rng):
    if proposal.kind == PROPOSAL_RW:
        theta = state.theta + scales * rng.standard_normal(state.theta.shape[0])
        return theta, 0.0
    if proposal.kind == PROPOSAL_INDEPENDENT:
        theta = np.asarray(model.sample_prior_theta(rng), dtype=np.float64)
        return theta, model.log_prior(state.theta) - model.log_prior(theta)
    return state.theta, 0.0


def _move_randomness(state, config, rng) -> tuple[int, list]:
    """Apply the u-proposal in place; return (refreshed block 1-based or 0,
    snapshots needed to revert)."""
    br = state.randomness
    if config.kind == BPM:
        k = select_block(rng, br.num_blocks)
        snapshots = [(k - 1, br.snapshot_block(k - 1))]
        br.refresh_block(k - 1)
        return k, snapshots
    if config.kind == IPM:
        snapshots = [(k, br.snapshot_block(k)) for k in range(br.num_blocks)]
        br.refresh_all()
        return 0, snapshots
    # CPM: every entry moves,.. snapshot all raw arrays (copies are cheap
    # relative to the full-vector normal draw the move itself needs).
    snapshots = [(k, br.snapshot_block(k)) for k in range(br.num_blocks)]
    br.crank_nicolson_update(config.cpm_correlation, rng)
    return 0, snapshots


def _step(state: ChainState, model, config: SamplerConfig, rng, scales):
    """One joint (theta, u) update in place.  Returns (accepted, k, info)."""
    br = state.randomness
    block, snapshots = _move_randomness(state, config, rng)
    theta_prop, log_q_ratio = _propose_theta(state, model, config.proposal, scales, rng)

    logpost_cur = model.log_prior(state.theta) + state.cached_loglik.total
    log_prior_prop = model.log_prior(theta_prop)
    if log_prior_prop == -np.inf:
        proposed = None
        log_alpha = -np.inf
    else:
        proposed = model.loglik(theta_prop, br)
        log_alpha = _log_accept_ratio(
            logpost_cur, log_prior_prop + proposed.total, log_q_ratio
        )

    accept_prob = float(np.exp(min(0.0, log_alpha)))
    accepted = log_alpha >= 0.0 or np.log(rng.random()) < log_alpha
    info = {
        "z_current": state.cached_loglik.total,
        "z_proposed": proposed.total if proposed is not None else -np.inf,
        "accept_prob": accept_prob,
    }
    if accepted:
        state.theta = theta_prop
        state.cached_loglik = proposed
    else:
        for k, snap in snapshots:
            br.restore_block(k, snap)
    state.iteration += 1
    return accepted, block, info


def bpm_step(state, model, config, rng, scales=None):
    """Block update: refresh one block of u jointly with the theta move."""
    cfg = replace(config, kind=BPM)
    scales = cfg.proposal.scale_vector(state.theta.shape[0]) if scales is None else scales
    accepted, block, _ = _step(state, model, cfg, rng, scales)
    return state, accepted, block


def ipm_step(state, model, config, rng, scales=None):
    """Independent update: refresh all blocks of u."""
    cfg = replace(config, kind=IPM)
    scales = cfg.proposal.scale_vector(state.theta.shape[0]) if scales is None else scales
    accepted, _, _ = _step(state, model, cfg, rng, scales)
    return state, accepted


def cpm_step(state, model, config, rng, scales=None):
    """Correlated update: Crank-Nicolson move of all underlying normals."""
    cfg = replace(config, kind=CPM)
    cfg.validate(state.randomness.num_blocks)
    scales = cfg.proposal.scale_vector(state.theta.shape[0]) if scales is None else scales
    accepted, _, _ = _step(state, model, cfg, rng, scales)
    return state, accepted


def init_state(model, config: SamplerConfig) -> ChainState:
    """Draw the initial (theta, u) and its estimate, retrying u on a zero
    estimated likelihood up to ``config.init_retries`` times."""
    layout = model.layout()
    config.validate(layout.num_blocks)
    rng = keyed_generator(config.seed, _STREAM_CHAIN, 0)
    br = BlockedRandomness(layout, config.rng_kind, config.seed)
    theta = np.asarray(model.initial_theta(rng), dtype=np.float64)
    if model.log_prior(theta) == -np.inf:
        raise ConfigurationError("initial theta has zero prior density")
    estimate = model.loglik(theta, br)
    retries = 0
    while estimate.total == -np.inf:
        if retries >= config.init_retries:
            raise EstimatorFailure(
                f"zero estimated likelihood at initialization after {retries} redraws"
            )
        br.refresh_all()
        estimate = model.loglik(theta, br)
        retries += 1
    return ChainState(theta=theta, randomness=br, cached_loglik=estimate)


def run_chain(model, config: SamplerConfig, iterations: int, burnin: int) -> ChainOutput:
    """Run one chain; store draws and traces after burn-in.

    Deterministic given (model, config.seed): reruns produce identical
    draws, flags, and z-traces.  Per-iteration wall times are measurement.
    """
    if not iterations > burnin >= 0:
        raise ConfigurationError("need iterations > burnin >= 0")
    state = init_state(model, config)
    dim = state.theta.shape[0]
    rng = keyed_generator(config.seed, _STREAM_CHAIN, 1)
    base_scales = config.proposal.scale_vector(dim)
    log_mult = 0.0

    kept = iterations - burnin
    draws = np.empty((kept, dim))
    accept_flags = np.zeros(kept, dtype=bool)
    block_trace = np.zeros(kept, dtype=np.int32)
    z_trace = np.empty(kept)
    z_current = np.empty(kept)
    z_proposed = np.empty(kept)
    wall_ms = np.empty(kept)

    loglik_evals = 0
    accepted_total = 0
    t_start = time.perf_counter()
    for it in range(iterations):
        t0 = time.perf_counter()
        scales = base_scales * np.exp(log_mult)
        accepted, block, info = _step(state, model, config, rng, scales)
        t1 = time.perf_counter()
        loglik_evals += 1
        accepted_total += accepted
        adapting = (
            config.proposal.adapt
            and config.proposal.kind == PROPOSAL_RW
            and it < burnin
        )
        if adapting:
            gain = (it + 1) ** (-config.proposal.adapt_decay)
            log_mult += gain * (info["accept_prob"] - config.proposal.target_accept)
            log_mult = float(np.clip(log_mult, -15.0, 15.0))
        if it >= burnin:
            j = it - burnin
            draws[j] = state.theta
            accept_flags[j] = accepted
            block_trace[j] = block
            z_trace[j] = state.cached_loglik.total
            z_current[j] = info["z_current"]
            z_proposed[j] = info["z_proposed"]
            wall_ms[j] = (t1 - t0) * 1e3
    wall_seconds = time.perf_counter() - t_start

    return ChainOutput(
        param_names=tuple(model.param_names),
        draws=draws,
        accept_flags=accept_flags,
        block_trace=block_trace,
        z_trace=z_trace,
        z_current=z_current,
        z_proposed=z_proposed,
        wall_ms=wall_ms,
        wall_seconds=wall_seconds,
        meta={
            "sampler": config.as_dict(),
            "iterations": iterations,
            "burnin": burnin,
            "num_blocks": model.num_blocks,
            "acceptance_rate_total": accepted_total / iterations,
            "loglik_evals": loglik_evals,
            "final_scales": (base_scales * np.exp(log_mult)).tolist(),
        },
    )
