import math

import numpy as np
import pytest

from jhsvd.blockkernel import RankDeficiencyError, Signature
from jhsvd.driver import (
    SolverConfig,
    UnsafeScalingError,
    block_jacobi,
    extract_sigma,
    solve_for_v,
)
from jhsvd.robustnorm import NU
from jhsvd.testgen import SpectrumSpec, gen_factor, gen_spectrum, relative_error

EPS = 2.0 ** -53


def orthogonal_matrix(n, seed):
    rng = np.random.default_rng(seed)
    q = np.eye(n, order="F")
    for _ in range(n):
        v = rng.normal(size=n)
        v /= np.linalg.norm(v)
        q -= 2.0 * np.outer(v, v @ q)
    return np.asfortranarray(q)


class TestConfig:
    def test_variant_sets_inner_limit(self):
        assert SolverConfig(variant="full-block").inner_sweep_limit == 30
        assert SolverConfig(variant="block-oriented").inner_sweep_limit == 1

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SolverConfig(variant="diagonal")
        with pytest.raises(ValueError):
            SolverConfig(block_width=3)
        with pytest.raises(ValueError):
            SolverConfig(shortening="lu")


class TestBlockJacobi:
    def test_diagonal_converges_immediately(self):
        g = np.diag([3.0, 1.0, 2.0, 5.0]).copy(order="F")
        res = block_jacobi(g, None, SolverConfig(block_width=2))
        assert res.converged
        assert res.block_sweeps == 1
        assert res.stats == ((0, 0),)
        assert np.array_equal(res.sigma, [5.0, 3.0, 2.0, 1.0])

    def test_orthogonal_input(self):
        q = orthogonal_matrix(64, seed=31)
        res = block_jacobi(q, None, SolverConfig(block_width=16))
        assert np.all(np.abs(res.sigma - 1.0) <= 64 * EPS)
        # V consistency: q^T (q v) recovers v
        vv = q.T @ (q @ res.v)
        assert np.abs(vv - res.v).max() <= 1e-13

    def test_sigma_sorted_within_classes(self):
        lam = gen_spectrum(SpectrumSpec(3, 64, seed=3))
        g, j = gen_factor(lam, seed=4)
        res = block_jacobi(g, j, SolverConfig(block_width=16))
        np_ = j.n_plus
        assert np.all(np.diff(res.sigma[:np_]) <= 0)
        assert np.all(np.diff(res.sigma[np_:]) <= 0)

    def test_svd_residual_and_orthogonality(self):
        lam = gen_spectrum(SpectrumSpec(2, 128, seed=1))
        g, j = gen_factor(lam, seed=2)
        res = block_jacobi(g, j, SolverConfig())
        assert res.converged
        bound = 100 * 128 * EPS
        resid = np.linalg.norm(g @ res.v - res.u * res.sigma) / np.linalg.norm(g)
        assert resid <= bound
        assert np.abs(res.u.T @ res.u - np.eye(128)).max() <= bound

    def test_hsvd_j_orthogonality(self):
        lam = gen_spectrum(SpectrumSpec(1, 128, seed=5))
        g, j = gen_factor(lam, seed=6)
        res = block_jacobi(g, j, SolverConfig())
        jv = np.diag(j.as_vector())
        assert np.abs(res.v.T @ jv @ res.v - jv).max() <= 100 * 128 * EPS
        assert np.abs(res.u.T @ res.u - np.eye(128)).max() <= 100 * 128 * EPS

    def test_qr_shortening_path(self):
        lam = gen_spectrum(SpectrumSpec(2, 64, seed=7))
        g, j = gen_factor(lam, seed=8)
        res_c = block_jacobi(g, j, SolverConfig(block_width=16))
        res_q = block_jacobi(g, j, SolverConfig(block_width=16, shortening="qr"))
        assert np.abs(res_q.sigma / res_c.sigma - 1).max() <= 1e-12

    def test_workers_bitwise(self):
        lam = gen_spectrum(SpectrumSpec(4, 128, seed=9))
        g, j = gen_factor(lam, seed=10)
        base = block_jacobi(g, j, SolverConfig())
        for workers in (2, 5):
            rep = block_jacobi(g, j, SolverConfig(), workers=workers)
            assert np.array_equal(base.sigma, rep.sigma)
            assert np.array_equal(base.u, rep.u)
            assert np.array_equal(base.v, rep.v)
            assert base.stats == rep.stats

    def test_solve_v_path(self):
        # triangular input: solving for V must reproduce the decomposition
        rng = np.random.default_rng(11)
        g = np.triu(rng.normal(size=(32, 32))) + 8 * np.eye(32)
        g = np.asfortranarray(g)
        cfg = SolverConfig(block_width=16, accumulate_v=False, solve_v=True)
        res = block_jacobi(g, None, cfg)
        resid = np.linalg.norm(g @ res.v - res.u * res.sigma) / np.linalg.norm(g)
        assert resid <= 100 * 32 * EPS

    def test_solve_v_requires_triangular(self):
        rng = np.random.default_rng(12)
        g = np.asfortranarray(rng.normal(size=(32, 32)) + 8 * np.eye(32))
        cfg = SolverConfig(block_width=16, accumulate_v=False, solve_v=True)
        with pytest.raises(ValueError):
            block_jacobi(g, None, cfg)

    def test_partial_decomposition(self):
        lam = gen_spectrum(SpectrumSpec(2, 64, seed=13))
        g, j = gen_factor(lam, seed=14)
        res = block_jacobi(g, j, SolverConfig(block_width=16, accumulate_v=False))
        assert res.v is None
        assert relative_error(res.sigma, j, lam) <= 1e-12

    def test_non_convergence_reported(self):
        lam = gen_spectrum(SpectrumSpec(2, 64, seed=15))
        g, j = gen_factor(lam, seed=16)
        res = block_jacobi(g, j, SolverConfig(block_width=16, max_block_sweeps=1))
        assert not res.converged
        assert res.block_sweeps == 1
        assert res.sigma.shape == (64,)

    def test_unsafe_scaling_rejected(self):
        g = np.diag(np.full(32, math.sqrt(NU) * 2)).copy(order="F")
        with pytest.raises(UnsafeScalingError):
            block_jacobi(g, None, SolverConfig(block_width=16))

    def test_order_must_match_blocking(self):
        with pytest.raises(ValueError):
            block_jacobi(np.eye(48), None, SolverConfig(block_width=32))

    def test_eigenvalues_property(self):
        lam = gen_spectrum(SpectrumSpec(3, 64, seed=17))
        g, j = gen_factor(lam, seed=18)
        res = block_jacobi(g, j, SolverConfig(block_width=16))
        ev = res.eigenvalues
        assert np.all(ev[: j.n_plus] > 0) and np.all(ev[j.n_plus :] < 0)


class TestSolveForV:
    def test_identity(self):
        w = np.arange(6.0).reshape(3, 2, order="F").copy(order="F")
        assert np.array_equal(solve_for_v(np.eye(3), w), w)

    def test_exact_2x2(self):
        r = np.array([[2.0, 1.0], [0.0, 2.0]], order="F")
        assert np.array_equal(solve_for_v(r, r.copy(order="F")), np.eye(2))

    def test_residual(self):
        rng = np.random.default_rng(19)
        r = np.asfortranarray(np.triu(rng.normal(size=(32, 32))) + 8 * np.eye(32))
        w = np.asfortranarray(rng.normal(size=(32, 32)))
        v = solve_for_v(r, w)
        resid = np.linalg.norm(r @ v - w) / np.linalg.norm(w)
        assert resid <= 10 * 32 * EPS

    def test_zero_diagonal(self):
        r = np.array([[1.0, 1.0], [0.0, 0.0]], order="F")
        with pytest.raises(ZeroDivisionError):
            solve_for_v(r, np.eye(2))


class TestExtractSigma:
    def test_identity(self):
        assert np.array_equal(extract_sigma(np.eye(5)), np.ones(5))

    def test_three_four(self):
        g = np.zeros((4, 1), order="F")
        g[0, 0] = 3.0
        g[1, 0] = 4.0
        assert extract_sigma(g)[0] == 5.0

    def test_extreme_scales(self):
        g = np.zeros((4, 2), order="F")
        g[:, 0] = 2.0 ** 510
        g[:, 1] = 2.0 ** -510
        sig = extract_sigma(g)
        assert np.all(np.isfinite(sig)) and np.all(sig > 0)
        assert sig[0] == pytest.approx(2.0 ** 511, rel=4 * EPS)
        assert sig[1] == pytest.approx(2.0 ** -509, rel=4 * EPS)

    def test_zero_column(self):
        with pytest.raises(RankDeficiencyError):
            extract_sigma(np.zeros((3, 1), order="F"))
