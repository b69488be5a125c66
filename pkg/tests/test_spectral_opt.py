import numpy as np
import pytest

from specmix import oracle
from specmix.linkmodel import LinkStats
from specmix.mixing import AggregationMatrix, expected_mixing, uniform_weights
from specmix.spectral_opt import (
    ChebyshevConfig,
    DegenerateRowError,
    EstimateNonConvergence,
    OptimizerConfig,
    SpectralEstimate,
    SpectralOptError,
    estimate_dominant_nontrivial,
    feasibility_residual,
    optimize,
    optimize_centralized,
    power_iteration_rho,
    restore_feasibility,
    subgradient,
    surrogate_operator,
)
from specmix.theory import prescribed_rho_matrix

from conftest import random_link_stats, random_weights, symmetric_doubly_stochastic


def oracle_dominant(p_bar: np.ndarray):
    n = p_bar.shape[0]
    dec = oracle.eig_sym(p_bar)
    ones = np.full(n, 1.0 / np.sqrt(n))
    consensus = int(np.argmax(np.abs(dec.eigenvectors.T @ ones)))
    idx = [k for k in range(n) if k != consensus]
    best = max(idx, key=lambda k: abs(dec.eigenvalues[k]))
    return dec.eigenvalues[best], dec.eigenvectors[:, best]


class TestSurrogateOperator:
    def test_identity_weights(self, rng):
        n = 5
        stats = random_link_stats(n, rng)
        r = surrogate_operator(AggregationMatrix(np.eye(n)), stats)
        assert np.abs(r - np.eye(n)).max() < 1e-15

    def test_single_pair_full_swap(self):
        n = 4
        a = np.eye(n)
        a[0, 0] = a[1, 1] = 0.0
        a[0, 1] = a[1, 0] = 1.0
        q = np.zeros((n, n))
        q[0, 1] = q[1, 0] = 1.0
        r = surrogate_operator(AggregationMatrix(a), LinkStats(q=q))
        expected = np.eye(n)
        expected[0, 0] = expected[1, 1] = 0.0
        expected[0, 1] = expected[1, 0] = 1.0
        assert np.abs(r - expected).max() < 1e-15

    def test_matches_expected_mixing(self, rng):
        for trial in range(10):
            n = 6
            a = random_weights(n, rng)
            stats = random_link_stats(n, rng)
            assert np.abs(surrogate_operator(a, stats) - expected_mixing(a, stats)).max() < 1e-12


class TestEstimator:
    def test_uniform_mixing_reports_zero(self):
        n = 9
        est = estimate_dominant_nontrivial(np.full((n, n), 1.0 / n), seed=0)
        assert abs(est.eigenvalue) < 1e-9
        assert abs(est.eigenvector.sum()) < 1e-6

    @pytest.mark.parametrize("beta", [0.25, 0.46, 0.92])
    def test_prescribed_radius(self, beta):
        p = prescribed_rho_matrix(22, beta)
        est = estimate_dominant_nontrivial(p, seed=1)
        assert abs(est.eigenvalue - beta) < 1e-9

    def test_matches_oracle_on_random_instances(self, rng):
        hits = 0
        trial = 0
        while hits < 10 and trial < 200:
            trial += 1
            n = 10
            a = random_weights(n, rng)
            stats = random_link_stats(n, rng)
            p_bar = expected_mixing(a, stats)
            value, vector = oracle_dominant(p_bar)
            # keep instances with clean separation so the eigvector is unique
            dec = oracle.eig_sym(p_bar - 1.0 / n)
            mags = np.sort(np.abs(dec.eigenvalues))[::-1]
            if mags[0] - mags[1] < 0.05:
                continue
            hits += 1
            est = estimate_dominant_nontrivial(p_bar, seed=trial)
            assert abs(est.eigenvalue - abs(value)) < 1e-6
            cos = abs(float(est.eigenvector @ vector))
            assert cos >= 0.999
        assert hits == 10

    def test_negative_dominant_branch(self):
        # heavy ring weights push the bottom eigenvalue dominant:
        # eigenvalues are alpha*cos(2 pi k / n) plus the consensus 1
        n = 8
        alpha = 0.9
        a = np.full((n, n), (1.0 - alpha) / n)
        for i in range(n):
            a[i, (i + 1) % n] += alpha / 2.0
            a[i, (i - 1) % n] += alpha / 2.0
        p_bar = a  # already symmetric doubly stochastic
        value, _ = oracle_dominant(p_bar)
        assert value < 0
        est = estimate_dominant_nontrivial(p_bar, seed=4)
        assert est.active_branch == "lambdaN"
        assert abs(est.eigenvalue - (-value)) < 1e-9

    def test_exact_branch_tie_prefers_lambda2(self):
        # all nontrivial eigenvalues equal and negative: |lambda2| == |lambdaN|
        n = 8
        a = np.full((n, n), 1.0 / (n - 1))
        np.fill_diagonal(a, 0.0)
        est = estimate_dominant_nontrivial(a, seed=4)
        assert est.active_branch == "lambda2"
        assert abs(est.eigenvalue - 1.0 / (n - 1)) < 1e-9

    def test_fixed_bounds_mode(self, rng):
        # user-supplied interval bracketing the unwanted spectrum converges
        p = prescribed_rho_matrix(12, 0.0) * 0.2 + 0.8 * symmetric_doubly_stochastic(12, rng)
        p = 0.5 * (p + p.T)
        value, _ = oracle_dominant(p)
        dec = oracle.eig_sym(p - 1.0 / 12)
        vals = np.sort(dec.eigenvalues)
        # interval covering everything except the top eigenvalue
        cfg = ChebyshevConfig(mu=float(vals[-2] + 1e-3), nu=float(vals[0] - 1e-3), iterations=600)
        est = estimate_dominant_nontrivial(p, cfg, seed=0)
        assert abs(est.eigenvalue - abs(value)) < 1e-6

    def test_invalid_bounds_rejected(self):
        with pytest.raises(SpectralOptError):
            ChebyshevConfig(mu=0.1, nu=0.2)
        with pytest.raises(SpectralOptError):
            ChebyshevConfig(mu=0.5)

    def test_non_convergence_signalled(self, rng):
        # enclosing the whole spectrum leaves nothing outside the interval,
        # so the recurrence cannot isolate the target
        p = symmetric_doubly_stochastic(12, rng)
        cfg = ChebyshevConfig(mu=2.0, nu=-2.0, iterations=60, tol=1e-14, fail_tol=1e-9)
        with pytest.raises(EstimateNonConvergence):
            estimate_dominant_nontrivial(p, cfg, seed=0)

    def test_rejects_bad_matrix(self, rng):
        with pytest.raises(SpectralOptError):
            estimate_dominant_nontrivial(rng.uniform(size=(5, 5)), seed=0)

    def test_gossip_normalization_fidelity_gap(self, rng):
        p = expected_mixing(random_weights(12, rng), random_link_stats(12, rng))
        value, _ = oracle_dominant(p)
        exact = estimate_dominant_nontrivial(p, ChebyshevConfig(), seed=3)
        coarse = estimate_dominant_nontrivial(
            p, ChebyshevConfig(normalization="gossip", gossip_rounds=2, fail_tol=1.0), seed=3
        )
        fine = estimate_dominant_nontrivial(
            p, ChebyshevConfig(normalization="gossip", gossip_rounds=120, fail_tol=1.0), seed=3
        )
        err_exact = abs(exact.eigenvalue - abs(value))
        err_fine = abs(fine.eigenvalue - abs(value))
        err_coarse = abs(coarse.eigenvalue - abs(value))
        assert err_exact < 1e-6
        # more averaging rounds move the gossip estimate toward the exact one
        assert err_fine <= err_coarse + 1e-9
        assert err_fine < 1e-3

    def test_estimate_invariants(self, rng):
        p = expected_mixing(random_weights(9, rng), random_link_stats(9, rng))
        est = estimate_dominant_nontrivial(p, seed=7)
        assert abs(np.linalg.norm(est.eigenvector) - 1.0) < 1e-9
        assert abs(est.eigenvector.sum()) / 3.0 < 1e-6


class TestPowerIterationBaseline:
    def test_agrees_with_oracle(self, rng):
        p = expected_mixing(random_weights(10, rng), random_link_stats(10, rng))
        value, _ = oracle_dominant(p)
        rho, used, trace = power_iteration_rho(p, seed=1, max_matvecs=50000, tol=1e-15)
        assert abs(rho - abs(value)) < 1e-6


class TestSubgradient:
    def test_zero_for_constant_pair(self, rng):
        n = 4
        stats = random_link_stats(n, rng)
        v = np.array([0.5, 0.5, -0.5, -0.5])
        est = SpectralEstimate(eigenvector=v, eigenvalue=0.5, active_branch="lambda2", iterations_used=1)
        g = subgradient(uniform_weights(n), stats, est)
        assert g[0, 1] == 0.0
        assert g[2, 3] == 0.0

    def test_unit_pair_value(self):
        n = 4
        q = np.zeros((n, n))
        q[0, 1] = q[1, 0] = 1.0
        v = np.zeros(n)
        v[0], v[1] = 1.0 / np.sqrt(2), -1.0 / np.sqrt(2)
        est = SpectralEstimate(eigenvector=v, eigenvalue=1.0, active_branch="lambda2", iterations_used=1)
        g = subgradient(uniform_weights(n), LinkStats(q=q), est)
        assert abs(g[0, 1] - (-1.0)) < 1e-15
        # sign flips on the other branch
        est_n = SpectralEstimate(eigenvector=v, eigenvalue=1.0, active_branch="lambdaN", iterations_used=1)
        g_n = subgradient(uniform_weights(n), LinkStats(q=q), est_n)
        assert abs(g_n[0, 1] - 1.0) < 1e-15

    def test_matches_finite_differences(self, rng):
        checked = 0
        trial = 0
        while checked < 6 and trial < 100:
            trial += 1
            n = 7
            a = random_weights(n, rng)
            stats = random_link_stats(n, rng)
            p_bar = expected_mixing(a, stats)
            dec = oracle.eig_sym(p_bar - 1.0 / n)
            mags = np.sort(np.abs(dec.eigenvalues))[::-1]
            vals = np.sort(dec.eigenvalues)
            # smoothness filter: unique active branch, simple eigenvalue
            if mags[0] - mags[1] < 0.02 or abs(vals[-1] + vals[0]) < 0.02:
                continue
            checked += 1
            est = estimate_dominant_nontrivial(p_bar, seed=trial)
            g = subgradient(a, stats, est)
            fd = oracle.finite_diff_rho(a.a, stats.q)
            assert np.abs(g - fd).max() < 1e-5
        assert checked == 6

    def test_symmetric_zero_diagonal(self, rng):
        n = 8
        a = random_weights(n, rng)
        stats = random_link_stats(n, rng)
        est = estimate_dominant_nontrivial(expected_mixing(a, stats), seed=0)
        g = subgradient(a, stats, est)
        assert np.abs(g - g.T).max() == 0.0
        assert np.abs(np.diag(g)).max() == 0.0


class TestRestoreFeasibility:
    def test_fixed_point(self, rng):
        a = symmetric_doubly_stochastic(6, rng)
        restored = restore_feasibility(a, sweeps=50)
        assert np.abs(restored.a - a).max() < 1e-12

    def test_positive_matrix_row_sums(self, rng):
        raw = rng.uniform(0.1, 2.0, size=(7, 7))
        restored = restore_feasibility(raw, sweeps=80)
        assert np.abs(restored.a.sum(axis=1) - 1.0).max() < 1e-9
        assert np.abs(restored.a - restored.a.T).max() == 0.0

    def test_matches_loop_oracle(self, rng):
        # independent plain-loop alternation, run to the same tolerance
        raw = rng.uniform(0.05, 1.0, size=(3, 3))
        restored = restore_feasibility(raw, sweeps=200, tol=1e-10)

        a = np.clip(raw.copy(), 0.0, None)
        for _ in range(200):
            a = 0.5 * (a + a.T)
            sums = a.sum(axis=1)
            if max(abs(s - 1.0) for s in sums) < 0.5e-10:
                break
            for i in range(3):
                a[i, :] /= sums[i]
        a = 0.5 * (a + a.T)
        assert np.abs(restored.a - a).max() < 1e-8

    def test_clips_negatives(self):
        raw = np.array([[0.8, -0.3, 0.5], [-0.3, 0.7, 0.2], [0.5, 0.2, 0.6]])
        restored = restore_feasibility(raw, sweeps=80)
        assert restored.a.min() >= 0.0
        assert restored.a[0, 1] == 0.0

    def test_budget_shortfall_signalled(self):
        # limit toward a permutation keeps a zero diagonal entry, where the
        # alternation converges sublinearly; the sweep budget must not be
        # silently violated
        raw = np.array([[0.9, 0.6], [0.6, 0.0]])
        with pytest.raises(SpectralOptError):
            restore_feasibility(raw, sweeps=30)

    def test_preserves_symmetric_zero_pattern(self, rng):
        n = 6
        raw = rng.uniform(0.2, 1.0, size=(n, n))
        raw[0, 2] = raw[2, 0] = 0.0
        raw[3, 5] = raw[5, 3] = 0.0
        restored = restore_feasibility(raw, sweeps=80)
        assert restored.a[0, 2] == 0.0
        assert restored.a[3, 5] == 0.0

    def test_degenerate_row_signalled(self):
        raw = np.array([[0.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.0, 0.5, 0.5]])
        with pytest.raises(DegenerateRowError):
            restore_feasibility(raw, sweeps=10)


class TestOptimize:
    def test_zero_iterations_returns_start(self, rng):
        n = 8
        a0 = uniform_weights(n)
        stats = random_link_stats(n, rng)
        result = optimize(a0, stats, OptimizerConfig(max_iterations=0), seed=1)
        assert np.array_equal(result.weights.a, a0.a)
        assert len(result.trace) == 1

    def test_equal_probability_links(self):
        # all-equal q: rho(P_bar) = 1 - c at uniform weights, exactly
        n = 10
        c = 0.4
        q = np.full((n, n), c)
        np.fill_diagonal(q, 0.0)
        stats = LinkStats(q=q)
        result = optimize(uniform_weights(n), stats, OptimizerConfig(max_iterations=30), seed=2)
        assert abs(result.trace[0].rho_oracle - (1.0 - c)) < 1e-12
        # the best iterate can only improve on the uniform start
        assert result.rho <= result.trace[0].rho_oracle + 1e-12

    def test_descends_and_stays_feasible(self, rng):
        n = 12
        stats = random_link_stats(n, rng)
        result = optimize(uniform_weights(n), stats, OptimizerConfig(max_iterations=80), seed=3)
        assert result.rho < result.trace[0].rho_oracle
        assert max(row.feasibility_residual for row in result.trace) <= 1e-9
        assert len(result.trace) == 81

    def test_matches_centralized_twin(self, rng):
        n = 10
        stats = random_link_stats(n, rng)
        dec = optimize(uniform_weights(n), stats, OptimizerConfig(max_iterations=120), seed=4)
        cen = optimize_centralized(uniform_weights(n), stats, OptimizerConfig(max_iterations=120))
        assert abs(dec.rho - cen.rho) <= 0.02

    def test_convergence_tol_stops_early(self):
        n = 8
        q = np.full((n, n), 0.5)
        np.fill_diagonal(q, 0.0)
        stats = LinkStats(q=q)
        cfg = OptimizerConfig(max_iterations=100, convergence_tol=0.5)
        result = optimize(uniform_weights(n), stats, cfg, seed=0)
        assert len(result.trace) < 101

    def test_trace_surrogate_close_to_oracle(self, rng):
        n = 9
        stats = random_link_stats(n, rng)
        result = optimize(uniform_weights(n), stats, OptimizerConfig(max_iterations=40), seed=5)
        worst = max(abs(r.rho_surrogate - r.rho_oracle) for r in result.trace)
        assert worst < 1e-3

    def test_config_validation(self):
        with pytest.raises(SpectralOptError):
            OptimizerConfig(step_size=0.0)
        with pytest.raises(SpectralOptError):
            OptimizerConfig(max_iterations=-1)
        with pytest.raises(SpectralOptError):
            OptimizerConfig(restoration_sweeps=0)
