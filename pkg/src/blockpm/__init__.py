"""Block pseudo-marginal MCMC toolkit.

A pseudo-marginal Metropolis-Hastings engine whose auxiliary randomness is
split into blocks and refreshed one block at a time (with independent and
correlated variants), analytic optimal-tuning tools, Monte Carlo and
randomized quasi-Monte Carlo randomness, and pluggable unbiased likelihood
estimators (panel importance sampling, data subsampling with control
variates, diffusion bridge sampling).
"""

from .diagnostics import corr_theta_z, corr_z_pairs, iact, ratio_table, summarize
from .estimators import BlockEstimator, LogLikEstimate, ToyGaussianModel
from .randomness import (
    MC,
    RQMC,
    BlockedRandomness,
    BlockLayout,
    ScrambledNetSpec,
    UnitShape,
    cn_update,
    generate_scrambled_net,
    uniforms_to_normals,
)
from .sampler import (
    BPM,
    CPM,
    IPM,
    ChainOutput,
    ChainState,
    ProposalConfig,
    SamplerConfig,
    bpm_step,
    cpm_step,
    init_state,
    ipm_step,
    mh_accept_ratio,
    run_chain,
    select_block,
)
from .tuning import (
    VARPI_MC,
    VARPI_RQMC,
    block_variance_target,
    calibrate_block_samples,
    computing_time,
    conditional_accept,
    inefficiency,
    minimize_ct,
    simulate_ideal_chain,
    unconditional_accept,
)

__version__ = "0.1.0"
