import json
import math

import numpy as np
import pytest
from scipy import linalg, stats

from animove.diffusion import (BrownianSpec, CtmcSufficientStats, GeneratorMatrix, OuParams, SdeSpec,
                               SwitchingPath, bm_log_likelihood, bm_variance_mle, brownian_bridge_marginal,
                               ctmc_log_likelihood, ctmc_mle, ctmc_stationary, ctmc_views, euler_log_likelihood,
                               euler_simulate, euler_transition, expected_occupancy, fit_ou_isotropic,
                               infill_path, integrated_ou_transition, load_generator, matrix_exponential,
                               occupancy_fractions, ou_bridge_moments, ou_conditional, ou_equilibrium,
                               ou_log_likelihood, phi, sample_bridge_path, simulate_bm,
                               simulate_integrated_ou, simulate_ou, simulate_switching_diffusion,
                               simulate_switching_replicates, stats_from_path, transition_probabilities)
from animove.trajectory import Trajectory

# stationary law of the bundled generator, from the null space of G' (frozen)
PI_FIXTURE = np.array([5 / 11, 4 / 11, 2 / 11])


class TestBrownian:
    def test_identical_positions(self):
        ll = bm_log_likelihood(BrownianSpec(np.eye(2)), ([0.0, 1.0], [[3.0, 4.0], [3.0, 4.0]]))
        assert ll == pytest.approx(-math.log(2 * math.pi), abs=1e-15)

    def test_against_scipy(self):
        cov = np.array([[2.0, 0.4], [0.4, 0.5]])
        t = np.array([0.0, 0.5, 2.0, 2.1])
        x = np.random.default_rng(0).normal(size=(4, 2))
        ref = sum(stats.multivariate_normal(np.zeros(2), cov * dt).logpdf(dx)
                  for dt, dx in zip(np.diff(t), np.diff(x, axis=0)))
        assert bm_log_likelihood(BrownianSpec(cov), (t, x)) == pytest.approx(ref, rel=1e-12)

    def test_variance_mle(self):
        rng = np.random.default_rng(1)
        t = np.cumsum(rng.uniform(0.5, 1.5, 10_001))
        x = simulate_bm(BrownianSpec.isotropic(1.0, 2), t, [0, 0], rng)
        s2 = bm_variance_mle((t, x))
        assert s2 == pytest.approx(1.0, rel=0.03)
        lik = lambda v: bm_log_likelihood(BrownianSpec.isotropic(v, 2), (t, x))
        assert lik(s2) > lik(s2 * 1.01) and lik(s2) > lik(s2 * 0.99)

    def test_offset_invariance(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(20, 2))
        t = np.arange(20.0)
        spec = BrownianSpec.isotropic(0.7, 2)
        assert bm_log_likelihood(spec, (t, x + 123.4)) == pytest.approx(bm_log_likelihood(spec, (t, x)), rel=1e-12)

    def test_trajectory_input(self):
        tr = Trajectory("a", [0, 1, 2, 3], [[0, 0], [1, 0], [np.nan, np.nan], [1, 1]])
        spec = BrownianSpec.isotropic(1.0, 2)
        ref = bm_log_likelihood(spec, ([0, 1, 3], [[0, 0], [1, 0], [1, 1]]))
        assert bm_log_likelihood(spec, tr) == ref

    @pytest.mark.parametrize("t", [[0.0, 0.0], [1.0, 0.5]])
    def test_nonpositive_dt(self, t):
        with pytest.raises(ValueError):
            bm_log_likelihood(BrownianSpec.isotropic(1.0), (t, [0.0, 1.0]))

    def test_invalid_cov(self):
        with pytest.raises(ValueError):
            BrownianSpec(np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestBridge:
    def test_endpoints(self):
        assert brownian_bridge_marginal(1.0, 3.0, 0.0, 2.0, 1.0, 0.0) == (1.0, 0.0)
        m, v = brownian_bridge_marginal(1.0, 3.0, 0.0, 2.0, 1.0, 2.0)
        assert (m, v) == (3.0, 0.0)

    def test_midpoint(self):
        m, v = brownian_bridge_marginal(0.0, 0.0, 0.0, 1.0, 1.0, 0.5)
        assert (m, v) == (0.0, 0.25)

    def test_variance_max_at_midpoint(self):
        ts = np.linspace(0, 4, 41)
        v = [brownian_bridge_marginal(0.0, 0.0, 0.0, 4.0, 2.0, t)[1] for t in ts]
        assert int(np.argmax(v)) == 20

    def test_outside_interval(self):
        with pytest.raises(ValueError):
            brownian_bridge_marginal(0, 1, 0, 1, 1, 1.5)

    def test_forward_construction_monte_carlo(self):
        # unconditioned BM on a fine grid, then pinned by the linear correction W(t) - t/T (W(T) - b)
        rng = np.random.default_rng(3)
        n, a, b, T, s2, tq = 10_000, 0.5, 2.0, 2.0, 1.5, 0.6
        w_t = rng.normal(0, math.sqrt(s2 * tq), n)
        w_T = w_t + rng.normal(0, math.sqrt(s2 * (T - tq)), n)
        x = a + w_t - tq / T * (w_T - (b - a))
        m, v = brownian_bridge_marginal(a, b, 0.0, T, s2, tq)
        assert abs(x.mean() - m) < 3 * math.sqrt(v / n)
        assert abs(x.var(ddof=1) - v) < 3 * v * math.sqrt(2 / (n - 1))

    def test_sampled_midpoint_matches_marginal(self):
        n = 10_000
        draws = np.array([sample_bridge_path(0.0, 1.0, 0.0, 1.0, 2.0, [0.5], np.random.default_rng(s))[0, 0]
                          for s in range(n)])
        m, v = brownian_bridge_marginal(0.0, 1.0, 0.0, 1.0, 2.0, 0.5)
        assert abs(draws.mean() - m) < 3 * math.sqrt(v / n)
        assert abs(draws.var(ddof=1) - v) < 3 * v * math.sqrt(2 / (n - 1))

    def test_sequential_joint_law(self):
        # Cov(X(s), X(t)) = s2 (s - t1)(t2 - t) / (t2 - t1) for s < t
        rng = np.random.default_rng(4)
        x = np.array([sample_bridge_path(0.0, 0.0, 0.0, 1.0, 1.0, [0.25, 0.75], rng)[:, 0] for _ in range(20_000)])
        c = np.cov(x.T)
        assert c[0, 1] == pytest.approx(0.25 * 0.25, abs=0.01)
        assert c[1, 1] == pytest.approx(0.75 * 0.25, abs=0.01)

    def test_empty_and_endpoint_queries(self):
        rng = np.random.default_rng(0)
        assert sample_bridge_path([1.0, 2.0], [0.0, 0.0], 0.0, 1.0, 1.0, [], rng).shape == (0, 2)
        out = sample_bridge_path([1.0, 2.0], [0.0, 0.0], 0.0, 1.0, 1.0, [0.0, 1.0], rng)
        np.testing.assert_array_equal(out, [[1.0, 2.0], [0.0, 0.0]])

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError):
            sample_bridge_path(0.0, 1.0, 0.0, 1.0, 1.0, [0.6, 0.4], np.random.default_rng(0))


class TestMatrixExponential:
    @pytest.mark.parametrize("seed", range(5))
    def test_against_eigendecomposition(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(4, 4))
        w, V = np.linalg.eig(M)
        ref = np.real((V * np.exp(0.7 * w)) @ np.linalg.inv(V))
        np.testing.assert_allclose(matrix_exponential(M, 0.7, check=True), ref, rtol=1e-10, atol=1e-12)

    def test_against_taylor_series(self):
        M = np.array([[0.0, 1.0], [-2.0, -0.3]])
        ref, term = np.eye(2), np.eye(2)
        for k in range(1, 60):
            term = term @ M / k
            ref = ref + term
        np.testing.assert_allclose(matrix_exponential(M), ref, rtol=1e-13, atol=1e-15)

    def test_defective_skips_check(self):
        J = np.array([[-1.0, 1.0], [0.0, -1.0]])
        E = matrix_exponential(J, 2.0, check=True)
        np.testing.assert_allclose(E, math.exp(-2) * np.array([[1, 2], [0, 1]]), rtol=1e-13)

    @pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
    def test_generator_rows_stochastic(self, t):
        P = transition_probabilities(load_generator(), t)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-10)
        assert np.all(P >= -1e-15)


class TestOu:
    def test_isotropic_only_without_expert(self):
        with pytest.raises(ValueError, match="expert"):
            OuParams([0, 0], np.diag([-1.0, -2.0]), np.eye(2))
        OuParams([0, 0], np.diag([-1.0, -2.0]), np.eye(2), expert=True)

    def test_unstable_rejected(self):
        with pytest.raises(ValueError, match="stable"):
            OuParams.isotropic([0.0], 0.5, 1.0)
        with pytest.raises(ValueError, match="stable"):
            OuParams([0, 0], np.array([[0.1, 0.0], [0.0, -0.5]]), np.eye(2), expert=True)

    def test_lambda_pd(self):
        with pytest.raises(ValueError):
            OuParams.isotropic([0.0, 0.0], -1.0, np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_zero_time(self):
        p = OuParams.isotropic([1.0, -1.0], -0.4, 2.0)
        g = ou_conditional(p, [3.0, 0.5], 0.0)
        np.testing.assert_array_equal(g.mean, [3.0, 0.5])
        np.testing.assert_allclose(g.cov, 0.0, atol=1e-15)

    def test_scalar_case(self):
        g = ou_conditional(OuParams.isotropic([0.0], -0.5, 1.0), [2.0], 1.0)
        assert g.mean[0] == pytest.approx(2 * math.exp(-0.5), rel=1e-14)
        assert g.cov[0, 0] == pytest.approx(1 - math.exp(-1), rel=1e-14)

    def test_long_time_equilibrium(self):
        p = OuParams.isotropic([1.0, 2.0], -0.3, np.array([[1.0, 0.2], [0.2, 0.5]]))
        g, eq = ou_conditional(p, [50.0, -50.0], 1e6), ou_equilibrium(p)
        np.testing.assert_allclose(g.mean, eq.mean, atol=1e-8)
        np.testing.assert_allclose(g.cov, eq.cov, atol=1e-8)

    def test_chapman_kolmogorov(self):
        B = np.array([[-0.5, 0.3], [-0.2, -0.8]])
        p = OuParams([1.0, -2.0], B, np.array([[1.0, 0.3], [0.3, 0.7]]), expert=True)
        u, t, s = np.array([2.0, 1.0]), 0.7, 1.9
        one = ou_conditional(p, u, t)
        E = p.expm(s)
        mean2 = E @ one.mean + (np.eye(2) - E) @ p.mu
        cov2 = E @ one.cov @ E.T + ou_conditional(p, np.zeros(2), s).cov
        direct = ou_conditional(p, u, t + s)
        np.testing.assert_allclose(mean2, direct.mean, atol=1e-10)
        np.testing.assert_allclose(cov2, direct.cov, atol=1e-10)

    def test_unreachable_lambda_rejected(self):
        with pytest.raises(ValueError, match="equilibrium"):
            OuParams([0, 0], np.array([[-0.2, 1.0], [-1.0, -0.2]]), np.array([[2.0, 0.5], [0.5, 1.0]]), expert=True)

    @pytest.mark.parametrize("t", [0.01, 0.5, 3.0, 40.0])
    def test_conditional_cov_psd(self, t):
        B = np.array([[-0.2, 1.0], [-1.0, -0.2]])
        lam = linalg.solve_continuous_lyapunov(B, -np.array([[1.0, 0.3], [0.3, 0.5]]))
        p = OuParams([0, 0], B, lam, expert=True)
        assert np.linalg.eigvalsh(ou_conditional(p, [1, 1], t).cov).min() >= -1e-12

    def test_fast_reversion_iid_limit(self):
        p = OuParams.isotropic([0.5, -0.5], -1e4, 0.8)
        x = np.random.default_rng(0).normal(size=(10, 2))
        ref = stats.multivariate_normal([0.5, -0.5], 0.8 * np.eye(2)).logpdf(x[1:]).sum()
        assert ou_log_likelihood(p, (np.arange(10.0), x)) == pytest.approx(ref, rel=1e-12)

    def test_equilibrium_mode_decomposition(self):
        p = OuParams.isotropic([0.0, 1.0], -0.7, 1.3)
        rng = np.random.default_rng(1)
        x = rng.normal(size=(8, 2))
        t = np.cumsum(rng.uniform(0.1, 2, 8))
        diff = ou_log_likelihood(p, (t, x), "equilibrium") - ou_log_likelihood(p, (t, x), "condition")
        assert diff == pytest.approx(ou_equilibrium(p).logpdf(x[0]), rel=1e-12)
        with pytest.raises(ValueError):
            ou_log_likelihood(p, (t, x), "stationary")

    def test_likelihood_against_scipy(self):
        p = OuParams.isotropic([0.0], -0.5, 2.0)
        t, x = np.array([0.0, 1.0, 3.0]), np.array([[0.3], [1.0], [-0.4]])
        ref = 0.0
        for k in range(2):
            e = math.exp(-0.5 * (t[k + 1] - t[k]))
            ref += stats.norm(e * x[k, 0], math.sqrt(2.0 * (1 - e * e))).logpdf(x[k + 1, 0])
        assert ou_log_likelihood(p, (t, x)) == pytest.approx(ref, rel=1e-13)

    def test_mle_recovery(self):
        truth = OuParams.isotropic([1.0, -1.0], -0.5, 2.0)
        rng = np.random.default_rng(5)
        t = np.arange(10_000.0) * 0.5
        x = simulate_ou(truth, t, [1.0, -1.0], rng)
        fit = fit_ou_isotropic((t, x))
        assert fit.params.B[0, 0] == pytest.approx(-0.5, rel=0.05)
        assert fit.params.Lambda[0, 0] == pytest.approx(2.0, rel=0.05)

    def test_increment_moments(self):
        p = OuParams.isotropic([0.0], -0.8, 1.5)
        rng = np.random.default_rng(6)
        x1 = np.array([simulate_ou(p, [0.0, 0.6], [2.0], rng)[1, 0] for _ in range(20_000)])
        g = ou_conditional(p, [2.0], 0.6)
        v = g.cov[0, 0]
        assert abs(x1.mean() - g.mean[0]) < 3 * math.sqrt(v / x1.size)
        assert abs(x1.var(ddof=1) - v) < 3 * v * math.sqrt(2 / (x1.size - 1))

    def test_single_time_point(self):
        out = simulate_ou(OuParams.isotropic([0, 0], -1.0, 1.0), [3.0], [1.0, 2.0], np.random.default_rng(0))
        np.testing.assert_array_equal(out, [[1.0, 2.0]])

    def test_long_run_occupancy(self):
        p = OuParams.isotropic([2.0], -1.0, 0.5)
        x = simulate_ou(p, np.arange(0, 20_000.0, 5.0), [2.0], np.random.default_rng(7))[:, 0]
        assert stats.kstest(x, stats.norm(2.0, math.sqrt(0.5)).cdf).pvalue > 0.001

    def test_isotropic_increment_angles(self):
        p = OuParams.isotropic([0.0, 0.0], -0.3, 1.0)
        x = simulate_ou(p, np.arange(3000.0), [0.0, 0.0], np.random.default_rng(8))
        rng = np.random.default_rng(9)
        d = np.array([ou_conditional(p, u, 1.0).sample(rng) - ou_conditional(p, u, 1.0).mean for u in x[:2000]])
        ang = np.arctan2(d[:, 1], d[:, 0])
        assert stats.kstest(ang, stats.uniform(-math.pi, 2 * math.pi).cdf).pvalue > 0.001

    def test_phi_is_unit_time_covariance(self):
        p = OuParams.isotropic([0.0], -2.0, 3.0)
        assert phi(p)[0, 0] == pytest.approx(3.0 * (1 - math.exp(-4.0)), rel=1e-14)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            ou_conditional(OuParams.isotropic([0.0], -1.0, 1.0), [0.0], -0.1)


def euler_moment_oracle(b, lam, mu_v, dt, h=1e-4):
    """Integrate the first two moments of (x, v) with forward Euler steps of size h."""
    th, s2 = -b, 2 * (-b) * lam
    A = np.array([[0.0, 1.0], [0.0, -th]])
    c = np.array([0.0, th * mu_v])
    D = np.diag([0.0, s2])
    n = int(round(dt / h))
    M, m = np.eye(2), np.zeros(2)
    P = np.zeros((2, 2))
    for _ in range(n):
        M = M + h * (A @ M)
        m = m + h * (A @ m + c)
        P = P + h * (A @ P + P @ A.T + D)
    return M, m, P


class TestIntegratedOu:
    @pytest.mark.parametrize("b, lam, mu_v", [(-1.0, 1.0, 0.0), (-0.3, 2.0, 0.5), (-2.5, 0.4, -1.0)])
    def test_against_euler_oracle(self, b, lam, mu_v):
        A, c, C = integrated_ou_transition(b, lam, mu_v, 0.5)
        M, m, P = euler_moment_oracle(b, lam, mu_v, 0.5)
        np.testing.assert_allclose(A, M, rtol=1e-3, atol=1e-12)
        np.testing.assert_allclose(c, m, rtol=1e-3, atol=1e-12)
        np.testing.assert_allclose(C, P, rtol=1e-3)

    def test_zero_volatility(self):
        vel = OuParams.isotropic([0.0], -0.5, 1e-300)
        x, v = simulate_integrated_ou(vel, [1.0], [2.0], [0.0, 1.0, 3.0], np.random.default_rng(0))
        np.testing.assert_allclose(v[:, 0], 2.0 * np.exp(-0.5 * np.array([0.0, 1.0, 3.0])), rtol=1e-12)
        np.testing.assert_allclose(x[:, 0], 1.0 + 4.0 * (1 - np.exp(-0.5 * np.array([0.0, 1.0, 3.0]))), rtol=1e-12)

    def test_velocity_equilibrium(self):
        vel = OuParams.isotropic([0.0, 0.0], -1.0, 0.7)
        _, v = simulate_integrated_ou(vel, [0, 0], [0, 0], np.arange(0, 10_000.0, 4.0), np.random.default_rng(1))
        assert stats.kstest(v[:, 0], stats.norm(0, math.sqrt(0.7)).cdf).pvalue > 0.001

    def test_requires_independent_coordinates(self):
        vel = OuParams([0, 0], np.array([[-1.0, 0.2], [0.0, -1.0]]), np.eye(2), expert=True)
        with pytest.raises(ValueError):
            simulate_integrated_ou(vel, [0, 0], [0, 0], [0, 1], np.random.default_rng(0))


class TestCtmc:
    def test_views_of_bundled_example(self):
        lam, Q = ctmc_views(load_generator())
        np.testing.assert_allclose(lam, [0.10, 0.05, 0.20], rtol=1e-14)
        assert 1 / lam[0] == pytest.approx(10.0)
        np.testing.assert_allclose(Q[2], [1.0, 0.0, 0.0])
        np.testing.assert_allclose(Q.sum(axis=1), 1.0)
        assert np.all(np.diag(Q) == 0)

    def test_stationary_null_space_oracle(self):
        G = load_generator()
        ns = linalg.null_space(G.G.T)[:, 0]
        ref = ns / ns.sum()
        np.testing.assert_allclose(ref, PI_FIXTURE, atol=1e-12)
        pi = ctmc_stationary(G)
        np.testing.assert_allclose(pi, PI_FIXTURE, atol=1e-12)
        np.testing.assert_allclose(pi @ transition_probabilities(G, 1.0), pi, atol=1e-12)

    def test_symmetric_two_state(self):
        np.testing.assert_allclose(ctmc_stationary(GeneratorMatrix([[-1.0, 1.0], [1.0, -1.0]])), [0.5, 0.5])

    @pytest.mark.parametrize("G", [[[-1.0, 2.0], [1.0, -1.0]], [[1.0, -1.0], [1.0, -1.0]], [[-1.0, 1.0, 0.0]]])
    def test_invalid_generator(self, G):
        with pytest.raises(ValueError):
            GeneratorMatrix(G)

    def test_json_round_trip(self, tmp_path):
        G = load_generator()
        p = tmp_path / "g.json"
        p.write_text(json.dumps(G.to_dict()))
        np.testing.assert_array_equal(load_generator(p).G, G.G)

    def test_absorbing_views(self):
        lam, Q = ctmc_views(GeneratorMatrix(np.zeros((2, 2))))
        np.testing.assert_array_equal(lam, 0)
        np.testing.assert_array_equal(Q, 0)

    def test_pure_survival(self):
        stats_ = CtmcSufficientStats([7.0, 0.0], [[0, 0], [0, 0]])
        assert ctmc_log_likelihood([0.3, 1.0], [[0, 1], [1, 0]], stats_) == pytest.approx(-2.1)

    def test_impossible_transition(self):
        stats_ = CtmcSufficientStats([1.0, 1.0, 1.0], [[0, 0, 1], [0, 0, 0], [0, 0, 0]])
        with pytest.warns(RuntimeWarning):
            assert ctmc_log_likelihood([1.0, 1.0, 1.0], [[0, 1, 0], [1, 0, 0], [1, 0, 0]], stats_) == -math.inf

    @pytest.mark.parametrize("h, c", [([-1.0, 1.0], [[0, 1], [1, 0]]), ([1.0, 1.0], [[1, 0], [0, 0]]),
                                      ([1.0, 1.0], [[0, 0.5], [0, 0]]), ([1.0], [[0, 1], [1, 0]])])
    def test_invalid_stats(self, h, c):
        with pytest.raises(ValueError):
            CtmcSufficientStats(h, c)

    def test_mle_recovers_rates(self):
        G = load_generator()
        lam, Q = ctmc_views(G)
        rng = np.random.default_rng(0)
        s, t = 0, 0.0
        times, states = [0.0], [0]
        while len(times) < 10_001:
            t += rng.exponential(1 / lam[s])
            s = int(rng.choice(3, p=Q[s]))
            times.append(t)
            states.append(s)
        st = stats_from_path(times, states, 3)
        lam_hat, Q_hat = ctmc_mle(st)
        np.testing.assert_allclose(lam_hat, lam, rtol=0.05)
        ll = ctmc_log_likelihood(lam_hat, Q_hat, st)
        for k in range(20):
            eps = np.random.default_rng(k).normal(0, 0.05, 3)
            assert ctmc_log_likelihood(lam_hat * np.exp(eps), Q_hat, st) < ll

    def test_mle_maximizes_jump_fractions(self):
        st = CtmcSufficientStats([10.0, 5.0, 2.0], [[0, 3, 7], [4, 0, 1], [2, 2, 0]])
        lam, Q = ctmc_mle(st)
        np.testing.assert_allclose(Q[0], [0, 0.3, 0.7])
        ll = ctmc_log_likelihood(lam, Q, st)
        Q2 = Q.copy()
        Q2[0, 1:] = [0.35, 0.65]
        assert ctmc_log_likelihood(lam, Q2, st) < ll

    def test_stats_from_path(self):
        st = stats_from_path([0.0, 2.0, 3.5, 6.0], [0, 1, 0, 0], 2)
        np.testing.assert_allclose(st.holding, [4.5, 1.5])
        np.testing.assert_array_equal(st.counts, [[0, 1], [1, 0]])


def bundled_models():
    return tuple(BrownianSpec.isotropic(v) for v in (0.01, 0.1, 1.0))


class TestSwitching:
    def test_valid_path(self):
        path = simulate_switching_diffusion(load_generator(), bundled_models(), [0.0], 0, 0.0, 100.0,
                                            np.random.default_rng(0))
        assert path.times[0] == 0.0 and path.times[-1] == 100.0
        assert path.states[0] == 0
        assert np.all(np.diff(path.times) > 0)
        assert path.n_switches == path.times.size - 2
        rows = path.rows()
        assert rows[0][:3] == [0.0, 1, 0.0]
        assert path.header() == ["time", "state", "x"]

    def test_absorbing_single_segment(self):
        G = GeneratorMatrix(np.zeros((2, 2)))
        path = simulate_switching_diffusion(G, bundled_models()[:2], [0.0], 1, 0.0, 5.0,
                                            np.random.default_rng(0))
        assert path.n_switches == 0
        np.testing.assert_array_equal(path.states, [1, 1])

    def test_holding_time_mean(self):
        G = load_generator()
        paths = simulate_switching_replicates(G, bundled_models(), [0.0], 0, 0.0, 1e6, seed=1, n=1)
        p = paths[0]
        dur = np.diff(p.times)[:-1][p.states[:-2] == 0]
        assert abs(dur.mean() - 10.0) < 3 * 10.0 / math.sqrt(dur.size)

    def test_occupancy_stationary_start(self):
        G = load_generator()
        paths = simulate_switching_replicates(G, bundled_models(), [0.0], "stationary", 0.0, 100.0, seed=2, n=1000)
        occ = np.array([occupancy_fractions(p, 3) for p in paths])
        se = occ.std(axis=0, ddof=1) / math.sqrt(len(occ))
        assert np.all(np.abs(occ.mean(axis=0) - PI_FIXTURE) < 3 * se)

    def test_expected_occupancy_oracle(self):
        G = load_generator()
        ts = np.linspace(0.0, 100.0, 20_001)
        P = np.array([transition_probabilities(G, t)[0] for t in ts])
        ref = np.trapezoid(P, ts, axis=0) / 100.0
        np.testing.assert_allclose(expected_occupancy(G, 0, 100.0), ref, atol=1e-8)
        np.testing.assert_allclose(expected_occupancy(G, 0, 100.0), [0.4959, 0.3240, 0.1802], atol=1e-4)

    def test_workers_identical(self):
        G = load_generator()
        a = simulate_switching_replicates(G, bundled_models(), [0.0], 0, 0.0, 50.0, seed=3, n=8)
        b = simulate_switching_replicates(G, bundled_models(), [0.0], 0, 0.0, 50.0, seed=3, n=8, workers=4)
        for p, q in zip(a, b):
            np.testing.assert_array_equal(p.positions, q.positions)

    def test_ou_states(self):
        models = (OuParams.isotropic([0.0, 0.0], -1.0, 1.0), BrownianSpec.isotropic(0.5, 2))
        G = GeneratorMatrix([[-0.5, 0.5], [0.5, -0.5]])
        path = simulate_switching_diffusion(G, models, [0.0, 0.0], 0, 0.0, 20.0, np.random.default_rng(4))
        assert path.dim == 2
        q = np.linspace(0, 20, 41)
        pos, st = infill_path(path, q, np.random.default_rng(5))
        assert pos.shape == (41, 2)
        np.testing.assert_array_equal(pos[0], path.positions[0])
        np.testing.assert_array_equal(pos[-1], path.positions[-1])
        np.testing.assert_array_equal(st, [path.state_at(t) for t in q])

    def test_validation(self):
        G = load_generator()
        with pytest.raises(ValueError):
            simulate_switching_diffusion(G, bundled_models()[:2], [0.0], 0, 0.0, 10.0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            simulate_switching_diffusion(G, bundled_models(), [0.0], 0, 5.0, 5.0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            SwitchingPath([0.0, 1.0, 2.0], [0, 0, 0], [[0], [0], [0]], bundled_models())
        with pytest.raises(ValueError):
            SwitchingPath([0.0, 1.0], [0, 1], [[0], [0]], bundled_models())

    def test_csv(self, tmp_path):
        path = simulate_switching_diffusion(load_generator(), bundled_models(), [0.0], 0, 0.0, 100.0,
                                            np.random.default_rng(6))
        out = tmp_path / "p.csv"
        path.to_csv(out)
        lines = out.read_text().splitlines()
        assert lines[0] == "time,state,x"
        assert len(lines) == path.times.size + 1

    def test_ou_bridge_moments_oracle(self):
        # joint Gaussian of (X(t), X(t2)) given X(t1), conditioned with scipy-free algebra
        p = OuParams.isotropic([1.0], -0.6, 2.0)
        x1, t1, x2, t2, t = 0.0, 0.0, 3.0, 2.0, 0.7
        e_a, e_b = math.exp(-0.6 * (t - t1)), math.exp(-0.6 * (t2 - t))
        m_t = 1.0 + e_a * (x1 - 1.0)
        v_t = 2.0 * (1 - e_a ** 2)
        m_2 = 1.0 + e_b * (m_t - 1.0)
        v_2 = e_b ** 2 * v_t + 2.0 * (1 - e_b ** 2)
        c = e_b * v_t
        g = ou_bridge_moments(p, [x1], t1, [x2], t2, t)
        assert g.mean[0] == pytest.approx(m_t + c / v_2 * (x2 - m_2), rel=1e-12)
        assert g.cov[0, 0] == pytest.approx(v_t - c * c / v_2, rel=1e-12)


class TestEuler:
    def test_drift_free_equals_bm(self):
        rng = np.random.default_rng(0)
        t = np.cumsum(rng.uniform(0.1, 1.0, 30))
        x = rng.normal(size=(30, 2))
        spec = SdeSpec.constant([0.0, 0.0], 0.7 * np.eye(2))
        ref = bm_log_likelihood(BrownianSpec.isotropic(0.49, 2), (t, x))
        assert euler_log_likelihood(spec, (t, x)) == pytest.approx(ref, rel=1e-12)

    def test_potential_drift(self):
        spec = SdeSpec.from_potential(lambda x: 0.5 * 2.0 * np.sum((x - 1.0) ** 2), 0.5)
        mean, cov = euler_transition(spec, 0.0, np.array([3.0, -1.0]), 0.1)
        np.testing.assert_allclose(mean, [3.0 - 0.4, -1.0 + 0.4], rtol=1e-8)
        np.testing.assert_allclose(cov, 0.025 * np.eye(2))

    def test_analytic_gradient(self):
        spec = SdeSpec.from_potential(lambda x: float(x @ x), np.eye(1), gradient=lambda x: 2 * x)
        np.testing.assert_allclose(spec.drift(0.0, np.array([1.5])), [-3.0])

    def test_error_ratio_against_exact_ou(self):
        a, sigma, mu = 1.3, 0.8, np.array([0.5])
        spec = SdeSpec.from_potential(lambda x: 0.5 * a * float(np.sum((x - mu) ** 2)), sigma,
                                      gradient=lambda x: a * (x - mu))
        p = OuParams.isotropic(mu, -a, sigma ** 2 / (2 * a))
        x = np.array([2.0])

        def err(dt):
            m, c = euler_transition(spec, 0.0, x, dt)
            g = ou_conditional(p, x, dt)
            return abs(m[0] - g.mean[0]) + abs(c[0, 0] - g.cov[0, 0])

        assert 3.6 <= err(0.01) / err(0.005) <= 4.4

    def test_simulated_increment_moments(self):
        a, sigma = 1.0, 1.0
        spec = SdeSpec.from_potential(lambda x: 0.5 * a * float(x @ x), sigma, gradient=lambda x: a * x)
        p = OuParams.isotropic([0.0], -a, 0.5)
        rng = np.random.default_rng(1)
        ends = np.array([euler_simulate(spec, [1.0], np.linspace(0, 0.5, 51), rng)[-1, 0] for _ in range(20_000)])
        g = ou_conditional(p, [1.0], 0.5)
        assert abs(ends.mean() - g.mean[0]) < 0.01
        assert abs(ends.var() - g.cov[0, 0]) < 0.01

    def test_likelihood_approaches_exact(self):
        a = 1.0
        spec = SdeSpec.from_potential(lambda x: 0.5 * a * float(x @ x), 1.0, gradient=lambda x: a * x)
        p = OuParams.isotropic([0.0], -a, 0.5)
        t = np.linspace(0, 50, 5001)
        x = simulate_ou(p, t, [0.0], np.random.default_rng(2))
        gaps = []
        for stride in (40, 20, 10):
            tt, xx = t[::stride], x[::stride]
            gaps.append(abs(euler_log_likelihood(spec, (tt, xx)) - ou_log_likelihood(p, (tt, xx))) / (tt.size - 1))
        assert gaps[0] > gaps[1] > gaps[2]

    def test_nonpositive_dt(self):
        spec = SdeSpec.constant([0.0], [[1.0]])
        with pytest.raises(ValueError):
            euler_transition(spec, 0.0, [0.0], 0.0)
        with pytest.raises(ValueError):
            euler_simulate(spec, [0.0], [0.0, 0.0], np.random.default_rng(0))
