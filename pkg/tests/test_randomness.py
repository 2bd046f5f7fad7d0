"""Tests for blocked randomness, scrambled nets, and transforms."""

import numpy as np
import pytest
from scipy.special import ndtr

from blockpm.exceptions import ConfigurationError
from blockpm.randomness import (
    KIND_INDEX,
    KIND_NORMAL,
    KIND_UNIFORM,
    MC,
    RQMC,
    BlockedRandomness,
    BlockLayout,
    ScrambledNetSpec,
    UnitShape,
    cn_update,
    generate_scrambled_net,
    integrand_product_linear,
    integrand_scaled_exp,
    rqmc_variance_rate_probe,
    uniforms_to_normals,
)


def normal_layout(num_blocks=4, n=3, d=2):
    return BlockLayout.uniform_blocks(KIND_NORMAL, num_blocks, UnitShape(n, d))


class TestKeyedRefresh:
    def test_same_key_same_contents(self):
        a = BlockedRandomness(normal_layout(), MC, master_seed=11)
        b = BlockedRandomness(normal_layout(), MC, master_seed=11)
        for k in range(a.num_blocks):
            np.testing.assert_array_equal(a.values(k)[0], b.values(k)[0])
        # contents depend on (k, counter) only, not on refresh order elsewhere
        a.refresh_block(0)
        a.refresh_block(0)
        b.refresh_block(2)
        b.refresh_block(0)
        b.refresh_block(0)
        np.testing.assert_array_equal(a.values(0)[0], b.values(0)[0])

    def test_different_seed_differs(self):
        a = BlockedRandomness(normal_layout(), MC, 1)
        b = BlockedRandomness(normal_layout(), MC, 2)
        assert not np.array_equal(a.values(0)[0], b.values(0)[0])

    def test_refresh_touches_only_target_block(self):
        br = BlockedRandomness(normal_layout(), MC, 5)
        before = [br.values(k)[0].copy() for k in range(br.num_blocks)]
        br.refresh_block(1)
        for k in range(br.num_blocks):
            if k == 1:
                assert not np.array_equal(br.values(k)[0], before[k])
            else:
                np.testing.assert_array_equal(br.values(k)[0], before[k])
        assert br.refresh_counters.tolist() == [1, 2, 1, 1]

    def test_snapshot_restore_bit_identical(self):
        br = BlockedRandomness(normal_layout(), MC, 5)
        original = br.raw_block(2)[0]
        snap = br.snapshot_block(2)
        br.refresh_block(2)
        br.restore_block(2, snap)
        assert br.raw_block(2)[0] is original

    def test_counter_out_of_range(self):
        br = BlockedRandomness(normal_layout(), MC, 5)
        with pytest.raises(ConfigurationError):
            br.refresh_block(7)

    def test_refreshed_normal_moments(self):
        layout = BlockLayout.uniform_blocks(KIND_NORMAL, 1, UnitShape(100_000, 1))
        br = BlockedRandomness(layout, MC, 123)
        x = br.values(0)[0]
        assert abs(x.mean()) < 3.0 / np.sqrt(100_000)
        assert abs(x.var() - 1.0) < 0.02

    def test_index_kind_values(self):
        layout = BlockLayout.uniform_blocks(
            KIND_INDEX, 3, UnitShape(500, 1), index_range=17
        )
        br = BlockedRandomness(layout, MC, 9)
        idx = br.values(0)[0]
        assert idx.dtype == np.int64
        assert idx.min() >= 1 and idx.max() <= 17
        # indices are the CDF transform of the stored normals
        raw = br.raw_block(0)[0]
        np.testing.assert_array_equal(idx, np.floor(ndtr(raw) * 17).astype(np.int64) + 1)

    def test_uniform_kind_values(self):
        layout = BlockLayout.uniform_blocks(KIND_UNIFORM, 2, UnitShape(1000, 2))
        br = BlockedRandomness(layout, MC, 9)
        u = br.values(1)[0]
        assert u.min() >= 0.0 and u.max() < 1.0

    def test_scalar_values_match_blocks(self):
        layout = BlockLayout.uniform_blocks(KIND_NORMAL, 8, UnitShape(1, 1))
        br = BlockedRandomness(layout, MC, 21)
        sv = br.scalar_values()
        expected = np.array([br.values(k)[0][0, 0] for k in range(8)])
        np.testing.assert_array_equal(sv, expected)
        snap = br.snapshot_block(3)
        br.refresh_block(3)
        assert br.scalar_values()[3] != expected[3]
        br.restore_block(3, snap)
        np.testing.assert_array_equal(br.scalar_values(), expected)


class TestCrankNicolson:
    def test_identity_at_one(self):
        rng = np.random.default_rng(0)
        u = rng.standard_normal((50, 3))
        np.testing.assert_array_equal(cn_update(u, 1.0, rng.standard_normal((50, 3))), u)

    def test_full_refresh_at_zero(self):
        rng = np.random.default_rng(0)
        u = rng.standard_normal((50, 3))
        eps = rng.standard_normal((50, 3))
        np.testing.assert_array_equal(cn_update(u, 0.0, eps), eps)

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            cn_update(np.zeros((2, 2)), 0.5, np.zeros((3, 2)))

    def test_high_correlation_moments(self):
        rng = np.random.default_rng(42)
        u = rng.standard_normal(100_000)
        out = cn_update(u, 0.9999, rng.standard_normal(100_000))
        corr = np.corrcoef(u, out)[0, 1]
        assert abs(corr - 0.9999) < 5e-4
        assert abs(out.var() - 1.0) < 0.02

    def test_preserves_standard_normal_marginals(self):
        rng = np.random.default_rng(7)
        u = rng.standard_normal(100_000)
        out = cn_update(u, 0.7, rng.standard_normal(100_000))
        assert abs(out.mean()) < 0.02
        assert abs(out.var() - 1.0) < 0.02


class TestScrambledNets:
    def test_one_dimensional_stratification(self):
        pts = generate_scrambled_net(ScrambledNetSpec(8, 1, scramble_seed=3))
        counts = np.histogram(pts[:, 0], bins=np.linspace(0, 1, 9))[0]
        assert counts.tolist() == [1] * 8

    def test_two_dimensional_dyadic_cells(self):
        # every 4x4 dyadic cell of the unit square holds exactly one of 16 points
        pts = generate_scrambled_net(ScrambledNetSpec(16, 2, scramble_seed=5))
        cells = np.floor(pts * 4).astype(int)
        flat = cells[:, 0] * 4 + cells[:, 1]
        assert sorted(flat.tolist()) == list(range(16))

    @pytest.mark.parametrize("seed", range(100))
    def test_stratification_all_seeds(self, seed):
        pts = generate_scrambled_net(ScrambledNetSpec(16, 2, scramble_seed=seed))
        assert pts.min() >= 0.0 and pts.max() < 1.0
        cells = np.floor(pts * 4).astype(int)
        flat = cells[:, 0] * 4 + cells[:, 1]
        assert sorted(flat.tolist()) == list(range(16))

    def test_uniform_marginal_mean(self):
        for n, d in [(64, 1), (128, 3), (256, 5)]:
            pts = generate_scrambled_net(ScrambledNetSpec(n, d, scramble_seed=11))
            np.testing.assert_allclose(
                pts.mean(axis=0), 0.5, atol=3.0 / np.sqrt(12.0 * n)
            )

    def test_power_of_two_required(self):
        with pytest.raises(ConfigurationError):
            ScrambledNetSpec(12, 2, 0)

    def test_dimension_cap(self):
        with pytest.raises(ConfigurationError):
            ScrambledNetSpec(16, 65, 0)

    def test_seed_controls_randomization(self):
        a = generate_scrambled_net(ScrambledNetSpec(32, 2, 1))
        b = generate_scrambled_net(ScrambledNetSpec(32, 2, 1))
        c = generate_scrambled_net(ScrambledNetSpec(32, 2, 2))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_rqmc_blocked_randomness(self):
        layout = BlockLayout.uniform_blocks(KIND_NORMAL, 3, UnitShape(16, 2))
        br = BlockedRandomness(layout, RQMC, 4)
        for k in range(3):
            raw = br.raw_block(k)[0]
            assert raw.shape == (16, 2)
            assert raw.min() >= 0.0 and raw.max() < 1.0
            vals = br.values(k)[0]
            assert np.isfinite(vals).all()

    def test_rqmc_rejects_index_kind(self):
        layout = BlockLayout.uniform_blocks(
            KIND_INDEX, 2, UnitShape(16, 1), index_range=10
        )
        with pytest.raises(ConfigurationError):
            BlockedRandomness(layout, RQMC, 0)

    def test_rqmc_rejects_non_power_of_two_units(self):
        layout = BlockLayout.uniform_blocks(KIND_NORMAL, 2, UnitShape(10, 1))
        with pytest.raises(ConfigurationError):
            BlockedRandomness(layout, RQMC, 0)


class TestUniformsToNormals:
    def test_center(self):
        assert uniforms_to_normals(np.array([0.5]))[0] == 0.0

    @staticmethod
    def _exact_quantile(u: float) -> float:
        # high-precision oracle: solve Phi(z) = u by Newton iteration at 40
        # digits (mpmath's erfinv is itself inaccurate near the endpoints)
        import mpmath

        mpmath.mp.dps = 40
        target = mpmath.mpf(u)
        z = mpmath.mpf(-8 if u < 0.5 else 8)
        if 1e-6 < u < 1.0 - 1e-6:
            z = mpmath.mpf(0)
        for _ in range(60):
            phi = mpmath.erfc(-z / mpmath.sqrt(2)) / 2
            density = mpmath.exp(-z * z / 2) / mpmath.sqrt(2 * mpmath.pi)
            step = (phi - target) / density
            z -= step
            if abs(step) < mpmath.mpf(10) ** -35:
                break
        return float(z)

    def test_known_quantile(self):
        assert abs(
            uniforms_to_normals(np.array([0.975]))[0] - 1.959963984540054
        ) < 1e-12
        for u in (0.975, 0.3, 1e-10, 1.0 - 1e-12):
            got = float(uniforms_to_normals(np.array([u]))[0])
            assert abs(got - self._exact_quantile(u)) < 1e-9

    def test_accuracy_over_range(self):
        grid = np.concatenate(
            [np.geomspace(1e-12, 0.4, 20), 1.0 - np.geomspace(1e-12, 0.4, 20)]
        )
        got = uniforms_to_normals(grid)
        expect = np.array([self._exact_quantile(u) for u in grid])
        assert np.max(np.abs(got - expect)) < 1e-9

    def test_monotone(self):
        rng = np.random.default_rng(0)
        u = np.sort(rng.random(1000))
        z = uniforms_to_normals(u)
        assert np.all(np.diff(z) > 0)

    def test_endpoint_clamp(self):
        z = uniforms_to_normals(np.array([0.0, 1.0]))
        assert np.isfinite(z).all()
        assert z[0] < -8 and z[1] > 8


class TestVarianceRateProbe:
    def test_slopes_smooth_integrand(self):
        res = rqmc_variance_rate_probe(
            integrand_product_linear, [2**m for m in range(5, 11)], replications=30,
            dim=2, seed=0,
        )
        assert abs(res["mc_slope"] + 1.0) < 0.3
        assert res["rqmc_slope"] < res["mc_slope"] - 0.5

    def test_constant_integrand_zero_variance(self):
        res = rqmc_variance_rate_probe(
            lambda u: np.ones(u.shape[:-1]), [32, 64], replications=10, dim=2, seed=0
        )
        assert np.all(res["mc_variances"] == 0.0)
        assert np.all(res["rqmc_variances"] == 0.0)

    def test_replication_floor(self):
        with pytest.raises(ConfigurationError):
            rqmc_variance_rate_probe(
                integrand_scaled_exp, [32, 64], replications=5, dim=2
            )
