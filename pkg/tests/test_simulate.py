import numpy as np
import pytest

from vgx.simulate import (BLOCK_SIZE, GridSpec, PathBatch, block_normals,
                          build_grid_cov, empirical_cmf_residual, factor_psd,
                          fsum_merge, load_path_batch, map_blocks,
                          sample_paths, save_path_batch)


def brownian(t, s):
    return np.array([[min(t, s)]])


class TestGridCov:
    def test_brownian_two_points(self):
        M = build_grid_cov(brownian, GridSpec(np.array([1.0, 2.0]), 1))
        np.testing.assert_allclose(M, [[1.0, 1.0], [1.0, 2.0]])

    def test_scaled_brownian_kernel(self):
        def cmf(t, s):
            return np.array([[2 * min(t, s)]])
        M = build_grid_cov(cmf, GridSpec(np.array([1.0, 2.0]), 1))
        np.testing.assert_allclose(M, [[2.0, 2.0], [2.0, 4.0]])

    def test_single_point_is_sigma(self):
        S = np.array([[2.0, 0.3], [0.3, 1.0]])
        M = build_grid_cov(lambda t, s: S, GridSpec(np.array([0.5]), 2))
        np.testing.assert_allclose(M, S)

    def test_rejects_asymmetric_cmf(self):
        def bad(t, s):
            return np.array([[1.0 if t <= s else 2.0]])
        with pytest.raises(ValueError, match="R\\(t,s\\)"):
            build_grid_cov(bad, GridSpec(np.array([0.0, 1.0]), 1))

    def test_dof_cap(self):
        with pytest.raises(ValueError, match="cap"):
            build_grid_cov(brownian, GridSpec(np.linspace(1, 2, 9000), 1))


class TestFactor:
    def test_identity_no_jitter(self):
        f = factor_psd(np.eye(4))
        assert f.jitter == 0.0
        np.testing.assert_allclose(f.lower, np.eye(4))

    def test_rank_deficient_succeeds(self):
        M = np.array([[1.0, 1.0], [1.0, 1.0]])
        f = factor_psd(M)
        recon = f.lower @ f.lower.T
        assert np.abs(recon - M).max() <= 1e-5

    def test_indefinite_fails(self):
        M = np.diag([1.0, -0.1])
        with pytest.raises(np.linalg.LinAlgError):
            factor_psd(M)

    def test_reconstruction_within_jitter(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(10, 3))
        M = A @ A.T  # rank 3, PSD
        f = factor_psd(M)
        assert np.abs(f.lower @ f.lower.T - M).max() <= f.jitter + 1e-10


class TestSampling:
    def test_determinism_same_key(self):
        f = factor_psd(np.eye(3))
        g = GridSpec(np.array([0.0, 0.5, 1.0]), 1)
        b1 = sample_paths(f, g, 1000, seed=7)
        b2 = sample_paths(f, g, 1000, seed=7)
        assert np.array_equal(b1.values, b2.values)

    def test_worker_count_invariance(self):
        f = factor_psd(np.eye(2))
        g = GridSpec(np.array([0.0, 1.0]), 1)
        b1 = sample_paths(f, g, 3 * BLOCK_SIZE + 17, seed=3, workers=1)
        b8 = sample_paths(f, g, 3 * BLOCK_SIZE + 17, seed=3, workers=8)
        assert np.array_equal(b1.values, b8.values)

    def test_empirical_covariance_identity(self):
        f = factor_psd(np.eye(2))
        g = GridSpec(np.array([0.0, 1.0]), 1)
        batch = sample_paths(f, g, 100_000, seed=1)
        resid = empirical_cmf_residual(batch, lambda t, s:
                                       np.array([[1.0 if t == s else 0.0]]))
        assert resid < 0.03

    def test_disjoint_streams_uncorrelated(self):
        a = block_normals(0, 0, 0, 50_000)
        b = block_normals(0, 1, 0, 50_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.01

    def test_block_keying_is_positional(self):
        # block k of a big run equals a standalone draw with the same key
        z = block_normals(5, 2, 3, (10,))
        z2 = block_normals(5, 2, 3, (10,))
        assert np.array_equal(z, z2)

    def test_mean_shrinks_like_sqrt_n(self):
        f = factor_psd(np.eye(1))
        g = GridSpec(np.array([0.0]), 1)
        devs = []
        for n in (10**3, 10**4, 10**5):
            batch = sample_paths(f, g, n, seed=2)
            devs.append(abs(batch.values.mean()) * np.sqrt(n))
        assert max(devs) < 4.0  # scaled deviations stay O(1)


class TestRoundTrip:
    def test_save_load(self, tmp_path):
        f = factor_psd(np.eye(4))
        g = GridSpec(np.array([0.0, 0.3, 0.7, 1.0]), 1)
        batch = sample_paths(f, g, 37, seed=9, stream=2)
        p = tmp_path / "b.bin"
        save_path_batch(batch, p)
        back = load_path_batch(p)
        assert np.array_equal(back.values, batch.values)
        assert np.array_equal(back.grid.times, batch.grid.times)
        assert back.seed == 9 and back.stream == 2

    def test_magic_rejected(self, tmp_path):
        p = tmp_path / "junk.bin"
        p.write_bytes(b"NOPE!" + b"\0" * 64)
        with pytest.raises(ValueError):
            load_path_batch(p)


def test_fsum_merge_order_insensitive():
    parts = [1e16, 1.0, -1e16, 1.0]
    assert fsum_merge(parts) == fsum_merge(reversed(parts)) == 2.0


def test_map_blocks_order():
    out = map_blocks(lambda b, c: (b, c), 2 * BLOCK_SIZE + 5, workers=4)
    assert [o[0] for o in out] == [0, 1, 2]
    assert [o[1] for o in out] == [BLOCK_SIZE, BLOCK_SIZE, 5]
