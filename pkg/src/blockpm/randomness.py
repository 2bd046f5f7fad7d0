"""Blocked auxiliary randomness for pseudo-marginal samplers.

The auxiliary variables u driving a likelihood estimator are held in G
blocks.  Block contents are a pure function of (master_seed, block index,
refresh counter), so refreshing block k is reproducible regardless of how
many times other blocks were refreshed.  Monte Carlo blocks store standard
normals; uniform and index views are derived through the normal CDF so that
the same storage supports Crank-Nicolson (correlated) updates.  RQMC blocks
store scrambled-net uniforms and expose normals through the inverse CDF.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.special import ndtr, ndtri
from scipy.stats import qmc

from .exceptions import ConfigurationError

MC = "mc"
RQMC = "rqmc"

KIND_NORMAL = "standard_normal"
KIND_UNIFORM = "uniform01"
KIND_INDEX = "index"

# Inverse-CDF clamp: uniforms at exactly 0 or 1 map to the nearest value
# with a finite normal quantile (0 -> 2**-64, 1 -> largest double below 1).
UNIFORM_LOW = 2.0**-64
UNIFORM_HIGH = float(np.nextafter(1.0, 0.0))

# Net dimension is capped by contract; per-block estimators stay well below.
MAX_NET_DIMENSION = 64


def keyed_generator(master_seed: int, *key: int) -> Generator:
    """Counter-based generator keyed by (master_seed, *key).

    Same key, same stream: contents never depend on call order or on what
    other streams were consumed.
    """
    return Generator(Philox(SeedSequence(master_seed, spawn_key=key)))


_MASK64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    # splitmix64 finalizer
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _key_words(*fields: int) -> tuple[int, int]:
    """Two 64-bit Philox key words from a tuple of integers."""
    s = 0x243F6A8885A308D3
    for f in fields:
        s = _mix64(s ^ _mix64((f + 0x9E3779B97F4A7C15) & _MASK64))
    return s, _mix64((s + 0x9E3779B97F4A7C15) & _MASK64)


class _KeyedStream:
    """One Philox generator re-keyed per draw (cheaper than reconstruction).

    Every draw is preceded by a full rekey, so outputs are a pure function
    of the key tuple regardless of what was drawn before.
    """

    def __init__(self):
        self._philox = Philox(key=0)
        self.generator = Generator(self._philox)

    def rekey(self, *fields: int) -> Generator:
        w1, w2 = _key_words(*fields)
        state = self._philox.state
        inner = state["state"]
        inner["counter"][:] = 0
        inner["key"][0] = w1
        inner["key"][1] = w2
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        self._philox.state = state
        return self.generator


class UnitShape(NamedTuple):
    """Shape of one randomness unit: n_points rows by dim columns."""

    n_points: int
    dim: int


@dataclass(frozen=True)
class ScrambledNetSpec:
    """A scrambled Sobol net: num_points must be a power of two."""

    num_points: int
    dimension: int
    scramble_seed: int

    def __post_init__(self) -> None:
        n, d = self.num_points, self.dimension
        if n < 1 or (n & (n - 1)) != 0:
            raise ConfigurationError(f"net size must be a power of 2, got {n}")
        if not 1 <= d <= MAX_NET_DIMENSION:
            raise ConfigurationError(
                f"net dimension must be in [1, {MAX_NET_DIMENSION}], got {d}"
            )


def _scrambled_net(n_points: int, dim: int, rng: Generator) -> np.ndarray:
    """Scrambled Sobol points in [0,1)^dim (linear matrix scramble + digital shift)."""
    engine = qmc.Sobol(d=dim, scramble=True, seed=rng)
    return engine.random(n_points)


def generate_scrambled_net(spec: ScrambledNetSpec) -> np.ndarray:
    """Generate the N x d matrix of scrambled-net uniforms for ``spec``."""
    rng = np.random.default_rng(spec.scramble_seed)
    return _scrambled_net(spec.num_points, spec.dimension, rng)


def uniforms_to_normals(u: np.ndarray) -> np.ndarray:
    """Elementwise inverse standard-normal CDF with endpoint clamping."""
    u = np.clip(np.asarray(u, dtype=np.float64), UNIFORM_LOW, UNIFORM_HIGH)
    return ndtri(u)


def cn_update(u_block: np.ndarray, rho: float, fresh_eps: np.ndarray) -> np.ndarray:
    """Crank-Nicolson move rho*u + sqrt(1-rho^2)*eps; preserves N(0,1) marginals."""
    u_block = np.asarray(u_block, dtype=np.float64)
    fresh_eps = np.asarray(fresh_eps, dtype=np.float64)
    if u_block.shape != fresh_eps.shape:
        raise ConfigurationError(
            f"shape mismatch: {u_block.shape} vs {fresh_eps.shape}"
        )
    if not 0.0 <= rho <= 1.0:
        raise ConfigurationError(f"correlation must be in [0, 1], got {rho}")
    return rho * u_block + np.sqrt(1.0 - rho * rho) * fresh_eps


@dataclass(frozen=True)
class BlockLayout:
    """Shapes of the G randomness blocks, each a sequence of (n, d) units.

    ``kind`` declares the law the estimator consumes: standard normals,
    uniforms on [0,1), or integer indices on {1..index_range}.
    """

    kind: str
    units: tuple[tuple[UnitShape, ...], ...]
    index_range: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in (KIND_NORMAL, KIND_UNIFORM, KIND_INDEX):
            raise ConfigurationError(f"unknown randomness kind {self.kind!r}")
        if not self.units:
            raise ConfigurationError("layout needs at least one block")
        if self.kind == KIND_INDEX and (self.index_range is None or self.index_range < 1):
            raise ConfigurationError("index blocks need a positive index_range")
        for block in self.units:
            for unit in block:
                if unit.n_points < 1 or unit.dim < 1:
                    raise ConfigurationError(f"invalid unit shape {unit}")

    @property
    def num_blocks(self) -> int:
        return len(self.units)

    @staticmethod
    def uniform_blocks(
        kind: str,
        num_blocks: int,
        unit: UnitShape,
        units_per_block: int = 1,
        index_range: int | None = None,
    ) -> "BlockLayout":
        """Layout with identical units in every block."""
        per_block = tuple(unit for _ in range(units_per_block))
        return BlockLayout(
            kind=kind,
            units=tuple(per_block for _ in range(num_blocks)),
            index_range=index_range,
        )

    def validate_for(self, rng_kind: str) -> None:
        if rng_kind not in (MC, RQMC):
            raise ConfigurationError(f"unknown rng kind {rng_kind!r}")
        if rng_kind == RQMC:
            if self.kind == KIND_INDEX:
                raise ConfigurationError("index blocks are Monte Carlo only")
            for k, block in enumerate(self.units):
                for unit in block:
                    ScrambledNetSpec(unit.n_points, unit.dim, 0)  # shape check


class BlockedRandomness:
    """The blocked auxiliary variables u of one chain.

    Raw storage is standard normals (MC) or scrambled-net uniforms (RQMC);
    ``values(k)`` exposes the declared kind.  Refreshing block k replaces
    its raw arrays with a draw keyed by (master_seed, k, counter), leaving
    every other block untouched.
    """

    # spawn-key tag separating block streams from other chain streams
    _STREAM = 0x75

    def __init__(self, layout: BlockLayout, rng_kind: str, master_seed: int):
        layout.validate_for(rng_kind)
        self.layout = layout
        self.rng_kind = rng_kind
        self.master_seed = int(master_seed)
        self.refresh_counters = np.zeros(layout.num_blocks, dtype=np.int64)
        self._store: list[list[np.ndarray]] = [[] for _ in range(layout.num_blocks)]
        self._values: list[list[np.ndarray] | None] = [None] * layout.num_blocks
        self._stream = _KeyedStream()
        # contiguous mirror of single-entry blocks, for vectorized estimators
        self._scalar_layout = all(
            len(block) == 1 and block[0] == UnitShape(1, 1) for block in layout.units
        )
        self._scalar = np.empty(layout.num_blocks) if self._scalar_layout else None
        for k in range(layout.num_blocks):
            self.refresh_block(k)

    @property
    def num_blocks(self) -> int:
        return self.layout.num_blocks

    def _draw_block(self, k: int, counter: int) -> list[np.ndarray]:
        arrays = []
        for u, unit in enumerate(self.layout.units[k]):
            if self.rng_kind == MC:
                rng = self._stream.rekey(self.master_seed, self._STREAM, k, counter, u)
                arrays.append(rng.standard_normal((unit.n_points, unit.dim)))
            else:
                # the net engine needs a spawnable seed sequence
                rng = keyed_generator(self.master_seed, self._STREAM, k, counter, u)
                arrays.append(_scrambled_net(unit.n_points, unit.dim, rng))
        return arrays

    def refresh_block(self, k: int) -> None:
        """Regenerate block k from its next keyed stream."""
        if not 0 <= k < self.num_blocks:
            raise ConfigurationError(f"block index {k} out of range")
        self.refresh_counters[k] += 1
        self._store[k] = self._draw_block(k, int(self.refresh_counters[k]))
        self._values[k] = None
        if self._scalar_layout:
            self._scalar[k] = self._store[k][0][0, 0]

    def refresh_all(self) -> None:
        for k in range(self.num_blocks):
            self.refresh_block(k)

    def raw_block(self, k: int) -> list[np.ndarray]:
        return self._store[k]

    def values(self, k: int) -> list[np.ndarray]:
        """Block k contents in the layout's declared kind (cached per draw)."""
        cached = self._values[k]
        if cached is not None:
            return cached
        kind = self.layout.kind
        if self.rng_kind == MC:
            if kind == KIND_NORMAL:
                vals = self._store[k]
            elif kind == KIND_UNIFORM:
                vals = [ndtr(a) for a in self._store[k]]
            else:
                r = self.layout.index_range
                vals = [
                    np.minimum(np.floor(ndtr(a) * r).astype(np.int64) + 1, r)
                    for a in self._store[k]
                ]
        else:
            if kind == KIND_UNIFORM:
                vals = self._store[k]
            else:
                vals = [uniforms_to_normals(a) for a in self._store[k]]
        self._values[k] = vals
        return vals

    def scalar_values(self) -> np.ndarray:
        """Vector of each block's single entry, in the declared kind.

        Only available when every block is one 1x1 unit.  The returned
        array is live storage; callers must not modify it.
        """
        if not self._scalar_layout:
            raise ConfigurationError("blocks are not scalar")
        kind = self.layout.kind
        if self.rng_kind == MC:
            if kind == KIND_NORMAL:
                return self._scalar
            if kind == KIND_UNIFORM:
                return ndtr(self._scalar)
            r = self.layout.index_range
            return np.minimum(np.floor(ndtr(self._scalar) * r).astype(np.int64) + 1, r)
        if kind == KIND_UNIFORM:
            return self._scalar
        return uniforms_to_normals(self._scalar)

    # -- snapshot/restore support joint-update rejection (bit-exact revert;
    #    counters stay monotone so the next refresh draws fresh numbers)

    def snapshot_block(self, k: int) -> tuple:
        return (self._store[k], self._values[k])

    def restore_block(self, k: int, snapshot: tuple) -> None:
        self._store[k], self._values[k] = snapshot
        if self._scalar_layout:
            self._scalar[k] = self._store[k][0][0, 0]

    def snapshot_all(self) -> list[tuple]:
        return [self.snapshot_block(k) for k in range(self.num_blocks)]

    def restore_all(self, snapshots: list[tuple]) -> None:
        for k, snap in enumerate(snapshots):
            self.restore_block(k, snap)

    def crank_nicolson_update(self, rho: float, rng: Generator) -> None:
        """Move every block by u <- rho*u + sqrt(1-rho^2)*eps with fresh eps.

        Requires Monte Carlo normal storage (uniform and index views move
        through the CDF transform, which preserves their marginal laws).
        """
        if self.rng_kind != MC:
            raise ConfigurationError("Crank-Nicolson updates need MC randomness")
        for k in range(self.num_blocks):
            self._store[k] = [
                cn_update(a, rho, rng.standard_normal(a.shape)) for a in self._store[k]
            ]
            self._values[k] = None
            self.refresh_counters[k] += 1
            if self._scalar_layout:
                self._scalar[k] = self._store[k][0][0, 0]


# ---------------------------------------------------------------------------
# Variance-rate probe: empirical convergence-rate comparison of MC vs RQMC
# on smooth test integrands over [0,1]^d.


def integrand_product_linear(u: np.ndarray) -> np.ndarray:
    """f(u) = prod_j (1 + (u_j - 1/2)); integrates to 1 on the unit cube."""
    return np.prod(1.0 + (u - 0.5), axis=-1)


def integrand_scaled_exp(u: np.ndarray) -> np.ndarray:
    """f(u) = exp(sum_j u_j) / (e-1)^d; integrates to 1 on the unit cube."""
    d = u.shape[-1]
    return np.exp(np.sum(u, axis=-1)) / (np.e - 1.0) ** d


def rqmc_variance_rate_probe(
    integrand,
    n_values,
    replications: int,
    dim: int = 2,
    seed: int = 0,
) -> dict:
    """Fit log2(variance) vs log2(N) slopes for MC and RQMC estimators.

    Returns the two fitted slopes plus the per-N variances used in the fit.
    """
    if replications < 10:
        raise ConfigurationError("need at least 10 replications")
    n_values = [int(n) for n in n_values]
    for n in n_values:
        ScrambledNetSpec(n, dim, 0)  # power-of-2 / dimension check
    rng = np.random.default_rng(seed)
    var_mc = []
    var_rqmc = []
    for n in n_values:
        est_mc = np.empty(replications)
        est_rq = np.empty(replications)
        for r in range(replications):
            est_mc[r] = integrand(rng.random((n, dim))).mean()
            est_rq[r] = integrand(_scrambled_net(n, dim, rng)).mean()
        var_mc.append(est_mc.var(ddof=1))
        var_rqmc.append(est_rq.var(ddof=1))
    logn = np.log2(np.asarray(n_values, dtype=float))

    def slope(v):
        v = np.asarray(v)
        if np.all(v == 0.0):
            return 0.0
        return float(np.polyfit(logn, np.log2(v), 1)[0])

    return {
        "n_values": n_values,
        "mc_variances": np.asarray(var_mc),
        "rqmc_variances": np.asarray(var_rqmc),
        "mc_slope": slope(var_mc),
        "rqmc_slope": slope(var_rqmc),
    }
