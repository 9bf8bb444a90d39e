import json
import math

import numpy as np
import pytest
from scipy import optimize, special, stats
from scipy.integrate import quad

from animove import kernels
from animove.distributions import Gamma, Gaussian, VonMises, Weibull, ZeroInflated
from animove.hmm import (FittedHmm, HmmSpec, OptimizerSettings, TransitionModel, fit_mle,
                         log_likelihood_bruteforce, log_likelihood_forward, pseudo_residuals,
                         select_covariates_forward, simulate_hmm, state_probabilities,
                         stationary_distribution, transition_matrix_at, viterbi)
from animove.trajectory import StepTurnSeries

from oracles import random_instance, softmax_tpm, stationary_eig


def two_state(beta0_off=-2.0, turns=True):
    b0 = np.array([[0.0, beta0_off], [beta0_off, 0.0]])
    tm = TransitionModel(2, b0)
    steps = (Gamma(2.0, 0.25), Gamma(2.0, 2.0))
    td = (VonMises(math.pi, 0.5), VonMises(0.0, 2.0)) if turns else None
    return HmmSpec(tm, steps, td)


def series_from(steps, turns=None):
    steps = np.asarray(steps, dtype=float)
    T = len(steps)
    tv = np.zeros(T, bool) if turns is None else np.ones(T, bool)
    turns = np.zeros(T) if turns is None else np.asarray(turns, dtype=float)
    return StepTurnSeries(steps, turns, np.ones(T, bool), tv)


class TestTransitionMatrix:
    def test_zero_coefficients_uniform(self):
        np.testing.assert_allclose(transition_matrix_at(TransitionModel(2)), [[0.5, 0.5], [0.5, 0.5]])

    def test_log_two_intercept(self):
        b0 = np.array([[0.0, math.log(2)], [0.0, 0.0]])
        g = transition_matrix_at(TransitionModel(2, b0))
        assert g[0, 1] == pytest.approx(2 / 3, abs=1e-15)

    def test_random_rows_stochastic(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            beta = rng.normal(size=(2, 3, 3))
            tm = TransitionModel(3, rng.normal(size=(3, 3)), beta, ("a", "b"))
            x = rng.normal(size=2) * 5
            g = transition_matrix_at(tm, x)
            assert np.all((g >= 0) & (g <= 1))
            np.testing.assert_allclose(g.sum(axis=1), 1.0, atol=1e-12)
            np.testing.assert_allclose(g, softmax_tpm(tm.beta0, tm.beta, x), rtol=1e-12)

    def test_wrong_covariate_count(self):
        with pytest.raises(ValueError):
            transition_matrix_at(TransitionModel(2, covariate_names=("a",)), [1.0, 2.0])

    def test_forbidden_transition(self):
        b0 = np.array([[0.0, -np.inf], [0.0, 0.0]])
        g = transition_matrix_at(TransitionModel(2, b0))
        np.testing.assert_array_equal(g[0], [1.0, 0.0])

    def test_stationary_matches_eigenvector(self):
        rng = np.random.default_rng(1)
        g = softmax_tpm(rng.normal(size=(3, 3)), np.zeros((0, 3, 3)), [])
        np.testing.assert_allclose(stationary_distribution(g), stationary_eig(g), atol=1e-12)

    def test_estimated_delta_validated(self):
        with pytest.raises(ValueError):
            TransitionModel(2, initial="estimated", delta=[0.3, 0.3])


class TestForwardLikelihood:
    def test_against_enumeration(self):
        rng = np.random.default_rng(2024)
        for _ in range(60):
            inst = random_instance(rng)
            ll = log_likelihood_forward(inst.spec, inst.series, inst.X)
            ref = inst.loglik()
            assert abs(ll - ref) <= 1e-10 * abs(ref)

    @pytest.mark.parametrize("N, T", [(2, 6), (3, 8)])
    def test_bruteforce_self_consistency(self, N, T):
        inst = random_instance(np.random.default_rng(N * 10 + T), N=N, T=T)
        fw = log_likelihood_forward(inst.spec, inst.series, inst.X)
        bf = log_likelihood_bruteforce(inst.spec, inst.series, inst.X)
        assert bf == pytest.approx(fw, rel=1e-10)

    def test_single_state_is_iid_sum(self):
        rng = np.random.default_rng(3)
        steps, turns = rng.gamma(2.0, 1.0, 20), rng.uniform(-3, 3, 20)
        spec = HmmSpec(TransitionModel(1), (Gamma(2.0, 1.0),), (VonMises(0.2, 1.5),))
        ref = stats.gamma(2.0).logpdf(steps).sum() + stats.vonmises(1.5, loc=0.2).logpdf(turns).sum()
        s = series_from(steps, turns)
        assert log_likelihood_forward(spec, s) == pytest.approx(ref, rel=1e-12)
        assert log_likelihood_bruteforce(spec, s) == pytest.approx(ref, rel=1e-12)

    def test_indistinguishable_states(self):
        d = Gamma(1.5, 2.0)
        s = series_from([0.4, 2.0, 5.0])
        two = HmmSpec(TransitionModel(2), (d, d))
        one = HmmSpec(TransitionModel(1), (d,))
        assert log_likelihood_bruteforce(two, s) == pytest.approx(log_likelihood_forward(one, s), rel=1e-13)

    def test_long_series_finite_and_fast(self):
        import time
        spec = two_state()
        _, s = simulate_hmm(spec, 100_000, rng=np.random.default_rng(0))
        t0 = time.perf_counter()
        ll = log_likelihood_forward(spec, s)
        elapsed = time.perf_counter() - t0
        assert math.isfinite(ll)
        if kernels.BACKEND == "cython":
            # the timing target is for the compiled kernels; the fallback only has to be correct
            assert elapsed < 1.0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            inst = random_instance(rng, N=3, T=7)
            perm = rng.permutation(3)
            a = log_likelihood_forward(inst.spec, inst.series, inst.X)
            b = log_likelihood_forward(inst.spec.permuted(perm), inst.series, inst.X)
            assert b == pytest.approx(a, rel=1e-12)

    def test_missing_equals_marginalized(self):
        inst = random_instance(np.random.default_rng(8), N=2, T=6, covariates=0, invalid_frac=0.0)
        s = inst.series
        sv = s.step_valid.copy()
        tv = s.turn_valid.copy()
        sv[3] = tv[3] = False
        masked = StepTurnSeries(s.steps, s.turns, sv, tv)
        spec = inst.spec
        ll_masked = log_likelihood_forward(spec, masked)
        assert ll_masked == pytest.approx(log_likelihood_bruteforce(spec, masked), rel=1e-12)
        tv_full = np.where(np.arange(6) == 3, False, s.turn_valid)

        def joint(y):
            steps = s.steps.copy()
            steps[3] = y
            return math.exp(log_likelihood_bruteforce(spec, StepTurnSeries(steps, s.turns, s.step_valid, tv_full)))

        integral = quad(joint, 0.0, np.inf, limit=200, epsrel=1e-10)[0]
        if isinstance(spec.step_dists[0], ZeroInflated):
            integral += joint(0.0)
        assert math.log(integral) == pytest.approx(ll_masked, rel=1e-8)

    def test_pooled_tracks_sum(self):
        rng = np.random.default_rng(9)
        spec = two_state()
        tracks = [simulate_hmm(spec, 30, rng=rng)[1] for _ in range(3)]
        total = sum(log_likelihood_forward(spec, t) for t in tracks)
        assert log_likelihood_forward(spec, tracks) == pytest.approx(total, rel=1e-14)
        assert log_likelihood_forward(spec, tracks, workers=3) == log_likelihood_forward(spec, tracks)

    def test_bruteforce_guard(self):
        spec = HmmSpec(TransitionModel(3), (Gamma(1, 1),) * 3)
        with pytest.raises(ValueError, match="enumeration limit"):
            log_likelihood_bruteforce(spec, series_from(np.ones(20)))

    def test_nan_emission_rejected(self):
        spec = two_state(turns=False)
        object.__setattr__(spec.step_dists[0], "shape", float("nan"))
        with pytest.raises(ValueError):
            log_likelihood_forward(spec, series_from([1.0, 2.0]))


class TestDecoding:
    def test_viterbi_matches_enumeration(self):
        rng = np.random.default_rng(77)
        for _ in range(60):
            inst = random_instance(rng)
            np.testing.assert_array_equal(viterbi(inst.spec, inst.series, inst.X), inst.viterbi())

    def test_single_state_all_zero(self):
        spec = HmmSpec(TransitionModel(1), (Gamma(2.0, 1.0),))
        np.testing.assert_array_equal(viterbi(spec, series_from(np.arange(1, 9.0))), np.zeros(8, int))

    def test_tie_goes_to_lower_state(self):
        d = Gamma(1.0, 1.0)
        spec = HmmSpec(TransitionModel(2), (d, d))
        np.testing.assert_array_equal(viterbi(spec, series_from([1.0, 2.0, 3.0])), [0, 0, 0])

    def test_posterior_matches_enumeration(self):
        rng = np.random.default_rng(12)
        for _ in range(40):
            inst = random_instance(rng, T=6)
            post = state_probabilities(inst.spec, inst.series, inst.X)
            np.testing.assert_allclose(post, inst.posterior(), atol=1e-9)
            np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-10)
            assert np.all(post >= 0)

    def test_single_state_posterior_ones(self):
        spec = HmmSpec(TransitionModel(1), (Gamma(2.0, 1.0),))
        np.testing.assert_array_equal(state_probabilities(spec, series_from([1.0, 2.0])), [[1.0], [1.0]])

    def test_last_posterior_is_normalized_forward(self):
        inst = random_instance(np.random.default_rng(4), N=3, T=5, covariates=0)
        post = state_probabilities(inst.spec, inst.series)
        tab = inst.log_joint_table()
        alpha = np.zeros(3)
        for seq, v in tab.items():
            alpha[seq[-1]] += math.exp(v)
        np.testing.assert_allclose(post[-1], alpha / alpha.sum(), atol=1e-12)


class TestPseudoResiduals:
    def test_calibrated_single_state(self):
        rng = np.random.default_rng(0)
        spec = HmmSpec(TransitionModel(1), (Gamma(2.0, 1.5),), (VonMises(0.5, 2.0),))
        _, s = simulate_hmm(spec, 2000, rng=rng)
        r = pseudo_residuals(spec, s)
        assert stats.kstest(r.steps, "norm").pvalue > 0.001
        assert stats.kstest(r.turns, "norm").pvalue > 0.001

    def test_calibrated_two_state(self):
        spec = two_state()
        _, s = simulate_hmm(spec, 3000, rng=np.random.default_rng(1))
        r = pseudo_residuals(spec, s)
        assert stats.kstest(r.steps, "norm").pvalue > 0.001

    def test_median_gives_zero(self):
        d = Gamma(2.0, 1.0)
        spec = HmmSpec(TransitionModel(1), (d,))
        med = stats.gamma(2.0).median()
        r = pseudo_residuals(spec, series_from([med]))
        assert r.steps[0] == pytest.approx(0.0, abs=1e-12)

    def test_zero_atom_randomized_and_seeded(self):
        spec = HmmSpec(TransitionModel(1), (ZeroInflated(0.3, Gamma(2.0, 1.0)),))
        s = series_from(np.zeros(500))
        a = pseudo_residuals(spec, s, rng=np.random.default_rng(4)).steps
        b = pseudo_residuals(spec, s, rng=np.random.default_rng(4)).steps
        np.testing.assert_array_equal(a, b)
        u = special.ndtr(a)
        assert np.all(u <= 0.3 + 1e-12)
        assert stats.kstest(u / 0.3, "uniform").pvalue > 0.001

    def test_misfit_inflates_tails(self):
        rng = np.random.default_rng(6)
        heavy = np.abs(stats.t(1.5).rvs(3000, random_state=rng)) + 1e-6
        spec = HmmSpec(TransitionModel(1), (Gamma(1.0, float(np.median(heavy))),))
        flags = pseudo_residuals(spec, series_from(heavy)).flag_outliers(3.0)
        assert flags["steps"] > 10 * 2 * stats.norm.sf(3.0)

    def test_invalid_entries_nan(self):
        spec = two_state()
        s = StepTurnSeries([1.0, 2.0], [0.1, 0.2], [True, False], [False, True])
        r = pseudo_residuals(spec, s)
        assert math.isnan(r.steps[1]) and math.isnan(r.turns[0])


class TestSimulate:
    def test_identity_gamma_constant_state(self):
        b0 = np.full((2, 2), -np.inf)
        spec = HmmSpec(TransitionModel(2, b0), (Gamma(1, 1), Gamma(2, 2)))
        states, _ = simulate_hmm(spec, 200, rng=np.random.default_rng(0), initial_state=0)
        assert np.all(states == 0)

    def test_all_zero_steps(self):
        spec = HmmSpec(TransitionModel(1), (ZeroInflated(1.0, Gamma(1, 1)),))
        _, s = simulate_hmm(spec, 100, rng=np.random.default_rng(0))
        assert np.all(s.steps == 0)

    def test_transition_frequencies(self):
        b0 = np.array([[0.0, -1.0, -2.0], [0.5, 0.0, -0.5], [1.0, 0.2, 0.0]])
        spec = HmmSpec(TransitionModel(3, b0), (Gamma(1, 1),) * 3)
        states, _ = simulate_hmm(spec, 100_000, rng=np.random.default_rng(11))
        g = transition_matrix_at(spec.transition)
        counts = np.zeros((3, 3))
        np.add.at(counts, (states[:-1], states[1:]), 1)
        n = counts.sum(axis=1, keepdims=True)
        se = np.sqrt(g * (1 - g) / n)
        assert np.all(np.abs(counts / n - g) < 3 * se + 1e-12)

    def test_deterministic(self):
        spec = two_state()
        a = simulate_hmm(spec, 50, rng=np.random.default_rng(3))
        b = simulate_hmm(spec, 50, rng=np.random.default_rng(3))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1].steps, b[1].steps)

    def test_covariates_required(self):
        spec = HmmSpec(TransitionModel(2, covariate_names=("w",)), (Gamma(1, 1),) * 2)
        with pytest.raises(ValueError):
            simulate_hmm(spec, 10, rng=np.random.default_rng(0))


def iid_gamma_mle(x):
    """Gamma MLE from the profile score equation log k - digamma(k) = log mean - mean log."""
    s = math.log(x.mean()) - np.log(x).mean()
    k = optimize.brentq(lambda k: math.log(k) - special.digamma(k) - s, 1e-6, 1e6, xtol=1e-14)
    return k, x.mean() / k


class TestFit:
    def test_single_state_matches_iid_mle(self):
        x = np.random.default_rng(21).gamma(2.5, 1.7, 500)
        spec = HmmSpec(TransitionModel(1), (Gamma(1.0, 1.0),))
        fit = fit_mle(spec, series_from(x), n_starts=2, gtol=1e-9)
        k, theta = iid_gamma_mle(x)
        assert fit.spec.step_dists[0].shape == pytest.approx(k, rel=1e-6)
        assert fit.spec.step_dists[0].scale == pytest.approx(theta, rel=1e-6)

    def test_recovery_and_invariants(self):
        truth = two_state()
        states, s = simulate_hmm(truth, 4000, rng=np.random.default_rng(5))
        init = HmmSpec(TransitionModel(2, np.array([[0, -1.0], [-1.0, 0]])),
                       (Gamma(1.5, 0.5), Gamma(1.5, 3.0)), (VonMises(3.0, 1.0), VonMises(0.1, 1.0)))
        fit = fit_mle(init, s, n_starts=3, seed=1)
        assert fit.converged
        np.testing.assert_allclose(fit.spec.step_means(), truth.step_means(), rtol=0.05)
        assert fit.aic == pytest.approx(-2 * fit.loglik + 2 * fit.n_params, rel=1e-15)
        assert fit.loglik == pytest.approx(log_likelihood_forward(fit.spec, s), rel=1e-9)
        assert np.all(np.diff(fit.spec.step_means()) > 0)
        path = viterbi(fit, s)
        assert np.mean(path == states) > 0.9

    def test_relabel_sorted(self):
        truth = two_state()
        _, s = simulate_hmm(truth, 1500, rng=np.random.default_rng(2))
        init = HmmSpec(truth.transition, (Gamma(2.0, 2.0), Gamma(2.0, 0.25)),
                       (VonMises(0.0, 2.0), VonMises(math.pi, 0.5)))
        fit = fit_mle(init, s, n_starts=1)
        assert fit.spec.step_means()[0] < fit.spec.step_means()[1]
        assert math.cos(fit.spec.turn_dists[0].mu - math.pi) > 0.9

    def test_nonfinite_init_rejected(self):
        spec = HmmSpec(TransitionModel(1), (Gamma(1.0, 1.0),))
        s = StepTurnSeries([0.0, 1.0], [0, 0], [True, True], [False, False])
        with pytest.raises(ValueError, match="not finite"):
            fit_mle(spec, s, n_starts=1)

    def test_nonconvergence_reported(self):
        truth = two_state()
        _, s = simulate_hmm(truth, 300, rng=np.random.default_rng(0))
        fit = fit_mle(truth, s, n_starts=1, maxiter=1)
        assert not fit.converged
        assert "grad_max_norm" in fit.report

    def test_settings_object_and_overrides(self):
        base = OptimizerSettings(n_starts=4, seed=3)
        spec = HmmSpec(TransitionModel(1), (Gamma(1.0, 1.0),))
        fit = fit_mle(spec, series_from([1.0, 2.0, 0.5]), settings=base, n_starts=2)
        assert len(fit.report["start_logliks"]) == 2


class TestSelection:
    def make_data(self, seed, informative):
        rng = np.random.default_rng(seed)
        T = 1500
        w = rng.normal(size=T)
        noise = rng.normal(size=T)
        beta = np.zeros((1, 2, 2))
        if informative:
            beta[0, 0, 1], beta[0, 1, 0] = 1.5, -1.5
        tm = TransitionModel(2, np.array([[0, -2.0], [-2.0, 0]]), beta, ("water",))
        spec = HmmSpec(tm, (Gamma(2.0, 0.25), Gamma(2.0, 2.0)))
        _, s = simulate_hmm(spec, T, covs=w[:, None], rng=rng)
        s = StepTurnSeries(s.steps, s.turns, s.step_valid, s.turn_valid, covariates={"water": w, "noise": noise})
        base = HmmSpec(TransitionModel(2, np.array([[0, -2.0], [-2.0, 0]])), spec.step_dists)
        return base, s

    def test_zero_candidates_returns_base(self):
        base, s = self.make_data(0, False)
        rep = select_covariates_forward(base, [], s, settings=OptimizerSettings(n_starts=1))
        assert rep.selected == ()
        assert rep.fit is rep.base_fit

    def test_informative_selected_first(self):
        base, s = self.make_data(1, True)
        rep = select_covariates_forward(base, ["noise", "water"], s, settings=OptimizerSettings(n_starts=1))
        assert rep.selected[0] == "water"
        aics = [rep.base_aic] + [st.aic for st in rep.steps]
        assert all(b < a for a, b in zip(aics, aics[1:]))
        assert rep.steps[0].delta_aic == pytest.approx(rep.base_aic - rep.steps[0].aic)
        json.dumps(rep.to_dict())

    def test_missing_candidate(self):
        base, s = self.make_data(0, False)
        with pytest.raises(KeyError):
            select_covariates_forward(base, ["elevation"], s)

    def test_duplicate_candidates(self):
        base, s = self.make_data(0, False)
        with pytest.raises(ValueError):
            select_covariates_forward(base, ["noise", "noise"], s)


class TestSerialization:
    def test_spec_round_trip(self):
        spec = HmmSpec(TransitionModel(2, np.array([[0, -np.inf], [0.3, 0]]), np.ones((1, 2, 2)), ("w",)),
                       (ZeroInflated(0.01, Gamma(1.0, 0.5)), Weibull(1.2, 3.0)),
                       (VonMises(math.pi, 0.5), VonMises(0.0, 1.0)))
        text = json.dumps(spec.to_dict())
        back = HmmSpec.from_dict(json.loads(text))
        assert back.transition.beta0[0, 1] == -np.inf
        s = StepTurnSeries([0.0, 1.0, 2.0], [0.1, -0.1, 2.0], [True] * 3, [False, True, True],
                           covariates={"w": np.array([0.0, 1.0, -1.0])})
        assert log_likelihood_forward(back, s) == log_likelihood_forward(spec, s)

    def test_missing_field(self):
        with pytest.raises(ValueError, match="missing field"):
            HmmSpec.from_dict({"transition": {"n_states": 1}})

    def test_fitted_to_dict(self):
        spec = HmmSpec(TransitionModel(1), (Gamma(1.0, 1.0),))
        fit = fit_mle(spec, series_from([1.0, 2.0]), n_starts=1)
        assert isinstance(fit, FittedHmm)
        d = json.loads(json.dumps(fit.to_dict()))
        assert d["aic"] == pytest.approx(fit.aic)

    @pytest.mark.parametrize("bad", [lambda: HmmSpec(TransitionModel(2), (Gamma(1, 1),)),
                                     lambda: HmmSpec(TransitionModel(1), (Gaussian(0, 1),)),
                                     lambda: HmmSpec(TransitionModel(1), (Gamma(1, 1),), (Gamma(1, 1),))])
    def test_invalid_specs(self, bad):
        with pytest.raises(ValueError):
            bad()
