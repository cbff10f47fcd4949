"""Default-prior calculus, conditional moments, prior forest draws."""

import numpy as np
import pytest
from scipy.special import digamma, polygamma

from sharedforest.errors import ConfigError, DataError
from sharedforest.models import (
    ChainConfig,
    PriorConfig,
    default_prior_gamma,
    default_prior_lognormal,
    gamma_conditional_moments,
    lognormal_conditional_moments,
    prior_forest_values,
    solve_loggamma_hyperparams,
)
from sharedforest.tree_prior import SplitProbabilities, TreePriorParams


class TestHyperparamSolver:
    def test_default_case_near_large_t_approximation(self):
        """a=0.5, T=50: alpha near T/a^2 = 200, residual-checked."""
        a, b = solve_loggamma_hyperparams(0.5, 50)
        assert 195 < a < 206
        assert abs(float(polygamma(1, a)) - 0.25 / 50) < 1e-10
        assert abs(float(digamma(a)) - np.log(b)) < 1e-10

    def test_residuals_across_grid(self):
        for a_lambda in (0.1, 0.5, 1.5):
            for num_trees in (10, 50, 200):
                a, b = solve_loggamma_hyperparams(a_lambda, num_trees)
                target = a_lambda**2 / num_trees
                assert abs(float(polygamma(1, a)) - target) < 1e-10
                assert abs(float(digamma(a)) - np.log(b)) < 1e-10

    def test_bisection_oracle_agreement(self):
        """Newton root matches an independent bisection solve."""
        a_lambda, num_trees = 0.7, 25
        target = a_lambda**2 / num_trees
        lo, hi = 1e-3, 1e8
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(polygamma(1, mid)) > target:
                lo = mid
            else:
                hi = mid
        a, _ = solve_loggamma_hyperparams(a_lambda, num_trees)
        assert a == pytest.approx(0.5 * (lo + hi), rel=1e-9)

    def test_asymptotic_ratio(self):
        """alpha/T -> 1/a^2 within 1% at T = 10^4."""
        a_lambda = 0.5
        a, _ = solve_loggamma_hyperparams(a_lambda, 10**4)
        assert a / 10**4 == pytest.approx(1.0 / a_lambda**2, rel=0.01)

    def test_invalid_inputs(self):
        with pytest.raises(ConfigError):
            solve_loggamma_hyperparams(-1.0, 50)
        with pytest.raises(ConfigError):
            solve_loggamma_hyperparams(0.5, 0)


class TestDefaultPriors:
    def test_lognormal_kappa_formula(self):
        """T=50, k_mu=1.5: kappa = 50/2.25."""
        y = np.concatenate([np.zeros(3), np.exp(np.random.default_rng(0).normal(size=40))])
        hyper = default_prior_lognormal(y, 50, PriorConfig(num_trees=50))
        assert hyper["kappa"] == pytest.approx(50 / 2.25)

    def test_lognormal_mu_variance_target(self):
        """beta/((alpha-1) kappa) is about k_mu^2/T within 2% at T=50."""
        y = np.concatenate([np.zeros(3), np.exp(np.random.default_rng(1).normal(size=40))])
        cfg = PriorConfig(num_trees=50)
        hyper = default_prior_lognormal(y, 50, cfg)
        var_mu = hyper["beta_lambda"] / (
            (hyper["alpha_lambda"] - 1.0) * hyper["kappa"]
        )
        assert var_mu == pytest.approx(cfg.k_mu**2 / 50, rel=0.02)

    def test_doubling_trees_halves_leaf_variances(self):
        y = np.concatenate([np.zeros(3), np.exp(np.random.default_rng(2).normal(size=40))])
        cfg = PriorConfig()
        h1 = default_prior_lognormal(y, 50, cfg)
        h2 = default_prior_lognormal(y, 100, cfg)
        v1 = float(polygamma(1, h1["alpha_lambda"]))
        v2 = float(polygamma(1, h2["alpha_lambda"]))
        assert v2 == pytest.approx(v1 / 2, rel=1e-6)
        assert h2["kappa"] == pytest.approx(2 * h1["kappa"], rel=1e-12)

    def test_gamma_a_lambda_from_log_sd(self):
        """Lognormal Y with log-sd 1: a_lambda about k_lambda * 1."""
        rng = np.random.default_rng(3)
        y = np.concatenate([np.zeros(50), np.exp(rng.normal(size=5000))])
        hyper = default_prior_gamma(y, 50, PriorConfig())
        assert hyper["a_lambda"] == pytest.approx(1.5, rel=0.05)

    def test_gamma_scale_invariance(self):
        rng = np.random.default_rng(4)
        y = np.concatenate([np.zeros(10), rng.gamma(2.0, 1.0, size=200)])
        h1 = default_prior_gamma(y, 50, PriorConfig())
        h2 = default_prior_gamma(123.0 * y, 50, PriorConfig())
        for key in ("alpha_lambda", "beta_lambda", "a_lambda", "sigma_theta"):
            assert h1[key] == pytest.approx(h2[key], rel=1e-10)

    def test_gamma_constant_positives_rejected(self):
        y = np.array([0.0, 2.0, 2.0, 2.0])
        with pytest.raises(DataError):
            default_prior_gamma(y, 50, PriorConfig())

    def test_sigma_theta_convention(self):
        y = np.concatenate([np.zeros(3), np.exp(np.random.default_rng(5).normal(size=30))])
        cfg = PriorConfig(num_trees=50, k_theta=2.0)
        hyper = default_prior_lognormal(y, 50, cfg)
        assert hyper["sigma_theta"] == pytest.approx(3.0 / (2.0 * np.sqrt(50)))


class TestConditionalMoments:
    def test_gamma_concrete(self):
        """lambda0 = 0, h = 0, alpha = 4: mean 1, var 0.25."""
        mean, var = gamma_conditional_moments(0.0, 0.0, 4.0)
        assert mean == 1.0
        assert var == 0.25

    def test_gamma_sd_proportional_to_mean(self):
        rng = np.random.default_rng(6)
        h = rng.normal(size=50)
        mean, var = gamma_conditional_moments(0.3, h, 2.5)
        ratio = np.sqrt(var) / mean
        np.testing.assert_allclose(ratio, 2.5**-0.5, rtol=1e-12)

    def test_gamma_monte_carlo(self):
        """10^6 gamma draws match the displayed moments within 3 MC SE."""
        rng = np.random.default_rng(7)
        lambda0, h, alpha = 0.2, -0.4, 3.0
        rate = alpha * np.exp(lambda0 + h)
        draws = rng.gamma(alpha, 1.0 / rate, size=10**6)
        mean, var = gamma_conditional_moments(lambda0, h, alpha)
        se_mean = np.sqrt(var / draws.size)
        assert abs(draws.mean() - mean) < 3 * se_mean
        se_var = var * np.sqrt(2.0 / draws.size) * 3
        assert abs(draws.var() - var) < 3 * se_var + 1e-4

    def test_lognormal_limit(self):
        m, s2 = lognormal_conditional_moments(0.0, 1e-12)
        assert m == pytest.approx(1.0, rel=1e-9)
        assert s2 == pytest.approx(0.0, abs=1e-9)

    def test_lognormal_concrete(self):
        """mu=0, sigma2=1: m = e^{1/2}, s2 = e(e-1)."""
        m, s2 = lognormal_conditional_moments(0.0, 1.0)
        assert m == pytest.approx(np.exp(0.5), rel=1e-12)
        assert s2 == pytest.approx(np.e * (np.e - 1.0), rel=1e-12)

    def test_lognormal_monte_carlo(self):
        rng = np.random.default_rng(8)
        mu, sigma2 = 0.3, 0.49
        draws = np.exp(mu + np.sqrt(sigma2) * rng.standard_normal(10**6))
        m, s2 = lognormal_conditional_moments(mu, sigma2)
        se = np.sqrt(s2 / draws.size)
        assert abs(draws.mean() - m) < 3 * se


class TestPriorForestDraws:
    def test_pointwise_variance_stable_in_tree_count(self):
        """Var h(x) stays sigma_mu^2 for T in {10, 50, 200} (MC error)."""
        points = np.array([[0.3, 0.6], [0.8, 0.2]])
        sigma_mu = 1.2
        n_draws = 4000
        variances = {}
        for num_trees in (10, 50, 200):
            rng = np.random.default_rng(1000 + num_trees)
            hs = np.array(
                [
                    prior_forest_values(points, num_trees, sigma_mu, rng=rng)[0]
                    for _ in range(n_draws)
                ]
            )
            variances[num_trees] = hs.var(axis=0)
        for num_trees, var in variances.items():
            se = sigma_mu**2 * np.sqrt(2.0 / n_draws)
            assert np.all(np.abs(var - sigma_mu**2) < 4 * se), num_trees

    def test_gp_limit_covariance_smoke(self):
        """Cov(h(x), h(x')) tracks sigma_mu^2 P(shared leaf in tree 1)."""
        rng = np.random.default_rng(9)
        points = np.array([[0.3, 0.6], [0.35, 0.55]])
        sigma_mu = 1.0
        n_draws = 3000
        hs = np.empty((n_draws, 2))
        shared = np.empty(n_draws, bool)
        for r in range(n_draws):
            h, first = prior_forest_values(points, 20, sigma_mu, rng=rng)
            hs[r] = h
            shared[r] = first[0] == first[1]
        cov = np.cov(hs[:, 0], hs[:, 1])[0, 1]
        prods = (hs[:, 0] - hs[:, 0].mean()) * (hs[:, 1] - hs[:, 1].mean())
        se = np.hypot(prods.std() / np.sqrt(n_draws),
                      sigma_mu**2 * shared.std() / np.sqrt(n_draws))
        assert abs(cov - sigma_mu**2 * shared.mean()) < 4 * se


class TestChainConfig:
    def test_iters_must_exceed_burnin(self):
        with pytest.raises(ConfigError):
            ChainConfig(iters=10, burnin=10, seed=1)

    def test_valid(self):
        cc = ChainConfig(iters=10, burnin=5, seed=1)
        assert cc.thin == 1 and cc.chains == 1
