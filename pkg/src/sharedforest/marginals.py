"""Closed-form leaf marginals and conjugate full conditionals.

Four leaf families are supported, each pairing a likelihood for the
observations routed to one leaf with a conjugate prior on that leaf's
parameter(s):

* Gaussian: R_i ~ N(mu, 1/nu_i) with mu ~ N(0, sigma_mu^2).
* Probit (latent Gaussian): the Gaussian family with unit precisions,
  applied to latent-variable residuals.
* Log-gamma: Y_i ~ Gam(alpha, eta_i * e^lambda) with
  lambda ~ logGam(alpha_lambda, beta_lambda), i.e. e^lambda gamma
  distributed; the backfit factor eta_i absorbs the other trees.
* Normal-gamma: Q_i ~ N(mu, 1/(nu_i * tau)) with
  tau ~ Gam(alpha_lambda, beta_lambda) and mu | tau ~ N(0, 1/(kappa*tau)).

Everything is computed in log space through log-gamma special
functions, and products over observations enter only through additive
sufficient statistics, so leaves can hold thousands of points.  All
kernels broadcast over arrays of per-leaf statistics.  Gamma
distributions are parameterized by shape and *rate* throughout (mean
shape/rate), matching the conventions of the model formulas; numpy's
``Generator.gamma`` wants a scale, so draws pass 1/rate.

The weighted second moments feeding the Gaussian and normal-gamma
marginals are accumulated in centered form (streaming West/Welford
updates in the stats classes, two-pass sums in the sampler) because the
raw-moment form cancels catastrophically when leaf residuals are nearly
constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "GaussianLeafPrior",
    "LogGammaLeafPrior",
    "NormalGammaLeafPrior",
    "GaussianLeafStats",
    "GammaLeafStats",
    "NormalGammaLeafStats",
    "gaussian_log_marginal",
    "probit_log_marginal",
    "gamma_log_marginal",
    "normal_gamma_log_marginal",
    "draw_gaussian_leaf",
    "draw_theta_leaf",
    "draw_lambda_leaf",
    "draw_mu_tau_leaf",
    "loggamma_logpdf",
    "normal_gamma_logpdf",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------


@dataclass
class GaussianLeafPrior:
    """N(0, sigma_mu^2) leaf prior; also the probit theta prior."""

    sigma_mu: float

    def __post_init__(self):
        if self.sigma_mu <= 0:
            raise ValueError("sigma_mu must be positive")


@dataclass
class LogGammaLeafPrior:
    """lambda ~ logGam(alpha_lambda, beta_lambda): e^lambda ~ Gam(a, rate b)."""

    alpha_lambda: float
    beta_lambda: float

    def __post_init__(self):
        if self.alpha_lambda <= 0 or self.beta_lambda <= 0:
            raise ValueError("log-gamma prior parameters must be positive")


@dataclass
class NormalGammaLeafPrior:
    """tau ~ Gam(alpha_lambda, beta_lambda), mu | tau ~ N(0, 1/(kappa tau))."""

    alpha_lambda: float
    beta_lambda: float
    kappa: float

    def __post_init__(self):
        if min(self.alpha_lambda, self.beta_lambda, self.kappa) <= 0:
            raise ValueError("normal-gamma prior parameters must be positive")


# ---------------------------------------------------------------------------
# Streaming sufficient statistics
# ---------------------------------------------------------------------------


class GaussianLeafStats:
    """Accumulates (n, w, weighted mean, centered M2, sum log nu).

    ``add`` streams one observation with precision ``nu``; the centered
    update avoids the cancellation of the raw sum of squares.  Disjoint
    accumulators merge exactly (Chan's parallel combination), so the
    statistics are invariant to how observations are grouped.
    """

    __slots__ = ("n", "w", "mean", "m2", "slog")

    def __init__(self):
        self.n = 0
        self.w = 0.0
        self.mean = 0.0
        self.m2 = 0.0
        self.slog = 0.0

    def add(self, r: float, nu: float = 1.0) -> None:
        if nu <= 0:
            raise ValueError("precision must be positive")
        self.n += 1
        w_new = self.w + nu
        delta = r - self.mean
        self.mean += (nu / w_new) * delta
        self.m2 += nu * delta * (r - self.mean)
        self.w = w_new
        self.slog += np.log(nu)

    def merge(self, other: "GaussianLeafStats") -> "GaussianLeafStats":
        out = GaussianLeafStats()
        out.n = self.n + other.n
        out.w = self.w + other.w
        if out.w > 0:
            delta = other.mean - self.mean
            out.mean = self.mean + delta * (other.w / out.w)
            out.m2 = self.m2 + other.m2 + delta * delta * self.w * other.w / out.w
        out.slog = self.slog + other.slog
        return out


class GammaLeafStats:
    """Accumulates (n, sum Y*eta, sum log eta, sum log Y) for a leaf."""

    __slots__ = ("n", "sum_y_eta", "sum_log_eta", "sum_log_y")

    def __init__(self):
        self.n = 0
        self.sum_y_eta = 0.0
        self.sum_log_eta = 0.0
        self.sum_log_y = 0.0

    def add(self, y: float, eta: float) -> None:
        if y <= 0 or eta <= 0:
            raise ValueError("gamma-leaf observations and backfits must be positive")
        self.n += 1
        self.sum_y_eta += y * eta
        self.sum_log_eta += np.log(eta)
        self.sum_log_y += np.log(y)

    def merge(self, other: "GammaLeafStats") -> "GammaLeafStats":
        out = GammaLeafStats()
        out.n = self.n + other.n
        out.sum_y_eta = self.sum_y_eta + other.sum_y_eta
        out.sum_log_eta = self.sum_log_eta + other.sum_log_eta
        out.sum_log_y = self.sum_log_y + other.sum_log_y
        return out


class NormalGammaLeafStats(GaussianLeafStats):
    """Weighted stats (N, w, Qbar, S^2) of backfit responses Q with weights nu.

    Same streaming accumulation as the Gaussian stats; here ``mean`` is
    the precision-weighted mean Qbar and ``m2`` the weighted centered
    sum of squares S^2.
    """


# ---------------------------------------------------------------------------
# Log marginals
# ---------------------------------------------------------------------------


def gaussian_log_marginal(n, w, mean, m2, sigma_mu, slog=0.0):
    """log of integral prod_i N(R_i | mu, 1/nu_i) N(mu | 0, sigma_mu^2) dmu.

    Inputs are per-leaf statistics: count ``n``, total precision
    ``w = sum nu_i``, weighted mean, weighted centered sum of squares
    ``m2`` and ``slog = sum log nu_i``.  Broadcasts over leaf arrays.
    An empty leaf contributes exactly 0.
    """
    n = np.asarray(n, dtype=float)
    w = np.asarray(w, dtype=float)
    mean = np.asarray(mean, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    k = sigma_mu**-2.0
    return (
        np.asarray(slog, dtype=float) / 2.0
        - 0.5 * n * _LOG_2PI
        - 0.5 * m2
        - 0.5 * w * mean * mean * (k / (k + w))
        + 0.5 * (np.log(k) - np.log(k + w))
    )


def probit_log_marginal(n, mean, m2, sigma_theta):
    """Gaussian marginal of unit-precision latent residuals (probit leaf)."""
    return gaussian_log_marginal(n, n, mean, m2, sigma_theta, 0.0)


def gamma_log_marginal(n, sum_y_eta, sum_log_eta, sum_log_y, prior, alpha):
    """log of the gamma-likelihood, log-gamma-prior leaf marginal.

    Computes, in log space,

        [prod eta_i^alpha Y_i^(alpha-1) / Gamma(alpha)^n]
        * [beta^a / Gamma(a)] * Gamma(a + n*alpha)
        / (beta + sum Y_i eta_i)^(a + n*alpha)

    with (a, beta) the log-gamma prior parameters.  Empty leaves give 0.
    """
    n = np.asarray(n, dtype=float)
    sum_y_eta = np.asarray(sum_y_eta, dtype=float)
    a, b = prior.alpha_lambda, prior.beta_lambda
    a_post = a + n * alpha
    return (
        alpha * np.asarray(sum_log_eta, dtype=float)
        + (alpha - 1.0) * np.asarray(sum_log_y, dtype=float)
        - n * gammaln(alpha)
        + a * np.log(b)
        - gammaln(a)
        + gammaln(a_post)
        - a_post * np.log(b + sum_y_eta)
    )


def normal_gamma_log_marginal(n, w, qbar, s2, prior, slog=0.0):
    """log of the normal-likelihood, normal-gamma-prior leaf marginal.

    Computes, in log space,

        (prod sqrt(nu_i / 2 pi)) sqrt(kappa / (kappa + w))
        * beta^a Gamma(a + n/2) / Gamma(a)
        * (beta + S^2/2 + kappa w Qbar^2 / (2 (kappa + w)))^-(a + n/2)

    where w = sum nu_i, Qbar is the weighted mean and S^2 the weighted
    centered sum of squares.  Empty leaves give 0.
    """
    n = np.asarray(n, dtype=float)
    w = np.asarray(w, dtype=float)
    qbar = np.asarray(qbar, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    a, b, kappa = prior.alpha_lambda, prior.beta_lambda, prior.kappa
    a_post = a + 0.5 * n
    b_post = b + 0.5 * s2 + 0.5 * kappa * w * qbar * qbar / (kappa + w)
    return (
        np.asarray(slog, dtype=float) / 2.0
        - 0.5 * n * _LOG_2PI
        + 0.5 * (np.log(kappa) - np.log(kappa + w))
        + a * np.log(b)
        - gammaln(a)
        + gammaln(a_post)
        - a_post * np.log(b_post)
    )


# ---------------------------------------------------------------------------
# Full-conditional draws
# ---------------------------------------------------------------------------


def draw_gaussian_leaf(w, mean, sigma_mu, rng: np.random.Generator):
    """Exact posterior draw mu ~ N(b/(k+w), 1/(k+w)) with b = w*mean."""
    w = np.asarray(w, dtype=float)
    mean = np.asarray(mean, dtype=float)
    k = sigma_mu**-2.0
    post_var = 1.0 / (k + w)
    post_mean = w * mean * post_var
    return post_mean + np.sqrt(post_var) * rng.standard_normal(np.shape(w))


def draw_theta_leaf(n, mean, sigma_theta, rng: np.random.Generator):
    """Probit leaf draw: Gaussian posterior with unit per-point precision."""
    return draw_gaussian_leaf(n, mean, sigma_theta, rng)


def draw_lambda_leaf(n, sum_y_eta, prior, alpha, rng: np.random.Generator):
    """Draw lambda = log tau, tau ~ Gam(a + alpha*n, b + sum Y_i eta_i)."""
    n = np.asarray(n, dtype=float)
    shape = prior.alpha_lambda + alpha * n
    rate = prior.beta_lambda + np.asarray(sum_y_eta, dtype=float)
    return np.log(rng.gamma(shape, 1.0 / rate))


def draw_mu_tau_leaf(n, w, qbar, s2, prior, rng: np.random.Generator):
    """Joint normal-gamma posterior draw of (mu, tau) for each leaf.

    tau ~ Gam(a + n/2, beta + S^2/2 + Qbar^2 kappa w / (2(kappa+w))) and
    mu | tau ~ N(w Qbar / (kappa + w), 1 / ((kappa + w) tau)).
    """
    n = np.asarray(n, dtype=float)
    w = np.asarray(w, dtype=float)
    qbar = np.asarray(qbar, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    a, b, kappa = prior.alpha_lambda, prior.beta_lambda, prior.kappa
    a_post = a + 0.5 * n
    b_post = b + 0.5 * s2 + 0.5 * kappa * w * qbar * qbar / (kappa + w)
    kappa_post = kappa + w
    mu_post = w * qbar / kappa_post
    tau = rng.gamma(a_post, 1.0 / b_post)
    mu = mu_post + rng.standard_normal(np.shape(tau)) / np.sqrt(kappa_post * tau)
    return mu, tau


# ---------------------------------------------------------------------------
# Densities (consistency checks, predictive computations)
# ---------------------------------------------------------------------------


def loggamma_logpdf(lam, alpha, beta):
    """Density of lambda = log tau with tau ~ Gam(alpha, rate beta)."""
    lam = np.asarray(lam, dtype=float)
    return alpha * np.log(beta) - gammaln(alpha) + alpha * lam - beta * np.exp(lam)


def normal_gamma_logpdf(mu, tau, prior: NormalGammaLeafPrior):
    """Joint density of (mu, tau) under the normal-gamma prior."""
    mu = np.asarray(mu, dtype=float)
    tau = np.asarray(tau, dtype=float)
    a, b, kappa = prior.alpha_lambda, prior.beta_lambda, prior.kappa
    log_gamma = a * np.log(b) - gammaln(a) + (a - 1.0) * np.log(tau) - b * tau
    log_norm = 0.5 * (np.log(kappa * tau) - _LOG_2PI) - 0.5 * kappa * tau * mu * mu
    return log_gamma + log_norm
