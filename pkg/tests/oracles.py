"""Independent oracles used by the unit and acceptance tests.

Everything here recomputes quantities by a route different from the
library code under test: literal recursive descent for routing, direct
recursion for the tree prior, brute-force quadrature for the conjugate
marginals, gridded likelihood-times-prior posteriors for the full
conditional samplers, and closed forms where they exist.  None of these
functions call the library kernels they are checking.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate
from scipy.special import gammaln
from scipy.stats import norm


# ---------------------------------------------------------------------------
# Tree routing and prior
# ---------------------------------------------------------------------------


def route_recursive(tree, x, slot=0):
    """Literal rule evaluation: recursive descent using x[j] <= C."""
    if tree.feature[slot] < 0:
        return int(slot)
    j = int(tree.feature[slot])
    if x[j] <= tree.threshold[slot]:
        return route_recursive(tree, x, int(tree.left[slot]))
    return route_recursive(tree, x, int(tree.right[slot]))


def tree_log_prior_recursive(tree, gamma, zeta, s, slot=0, lower=None, upper=None):
    """Recursive re-evaluation of the tree prior, node by node."""
    if lower is None:
        lower = np.zeros(tree.n_axes)
        upper = np.ones(tree.n_axes)
    d = int(tree.depth[slot])
    q = gamma * (1.0 + d) ** (-zeta)
    if tree.feature[slot] < 0:
        return np.log(1.0 - q)
    j = int(tree.feature[slot])
    cut = float(tree.threshold[slot])
    total = np.log(q) + np.log(s[j]) - np.log(upper[j] - lower[j])
    ul = upper.copy()
    ul[j] = cut
    ll = lower.copy()
    ll[j] = cut
    total += tree_log_prior_recursive(
        tree, gamma, zeta, s, int(tree.left[slot]), lower, ul
    )
    total += tree_log_prior_recursive(
        tree, gamma, zeta, s, int(tree.right[slot]), ll, upper
    )
    return total


def branching_process_sizes(gamma, zeta, n_draws, rng):
    """Leaf counts from a direct simulation of the branching process."""
    sizes = np.empty(n_draws, dtype=np.int64)
    for i in range(n_draws):
        n_leaves = 0
        frontier = [0]
        while frontier:
            d = frontier.pop()
            if rng.random() < gamma * (1.0 + d) ** (-zeta):
                frontier.extend((d + 1, d + 1))
            else:
                n_leaves += 1
        sizes[i] = n_leaves
    return sizes


# ---------------------------------------------------------------------------
# Quadrature marginals
# ---------------------------------------------------------------------------


def _log_quad(logf, lo, hi, **kw):
    """log integral of exp(logf) over (lo, hi), stabilized by its peak.

    A coarse scan locates the mode; adaptive quadrature then runs on a
    finite window where the integrand exceeds exp(-80) of its peak, so
    narrow interior peaks cannot be missed by the infinite-interval
    transformation.
    """
    grid = np.linspace(
        lo if np.isfinite(lo) else -40, hi if np.isfinite(hi) else 40, 2001
    )
    vals = np.array([logf(g) for g in grid])
    peak = vals.max()
    above = np.flatnonzero(vals - peak > -80)
    step = grid[1] - grid[0]
    wlo = max(grid[above[0]] - step, lo)
    whi = min(grid[above[-1]] + step, hi)
    val, _ = integrate.quad(
        lambda x: np.exp(logf(x) - peak),
        wlo,
        whi,
        limit=200,
        points=[grid[np.argmax(vals)]],
        **kw,
    )
    return peak + np.log(val)


def gaussian_marginal_quad(r, nu, sigma_mu):
    """log integral prod N(r_i | mu, 1/nu_i) N(mu | 0, sigma_mu^2) dmu."""
    r = np.asarray(r, dtype=float)
    nu = np.asarray(nu, dtype=float)

    def logf(mu):
        ll = np.sum(0.5 * np.log(nu / (2 * np.pi)) - 0.5 * nu * (r - mu) ** 2)
        lp = norm.logpdf(mu, scale=sigma_mu)
        return ll + lp

    return _log_quad(logf, -np.inf, np.inf)


def gamma_marginal_quad(y, eta, alpha, alpha_lambda, beta_lambda):
    """log integral prod Gam(y_i | alpha, eta_i e^lam) logGam(lam | a, b) dlam."""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)

    def logf(lam):
        rate = eta * np.exp(lam)
        ll = np.sum(
            alpha * np.log(rate) + (alpha - 1) * np.log(y) - rate * y - gammaln(alpha)
        )
        lp = (
            alpha_lambda * np.log(beta_lambda)
            - gammaln(alpha_lambda)
            + alpha_lambda * lam
            - beta_lambda * np.exp(lam)
        )
        return ll + lp

    return _log_quad(logf, -np.inf, np.inf)


def normal_gamma_marginal_quad(q, nu, alpha_lambda, beta_lambda, kappa):
    """log double integral of the normal likelihood against the NG prior.

    Integrates over u = log tau (outer, quadrature) and mu (inner,
    quadrature), each stabilized by the joint peak.
    """
    q = np.asarray(q, dtype=float)
    nu = np.asarray(nu, dtype=float)

    def log_joint(mu, u):
        tau = np.exp(u)
        ll = np.sum(
            0.5 * np.log(nu * tau / (2 * np.pi)) - 0.5 * nu * tau * (q - mu) ** 2
        )
        lp_tau = (
            alpha_lambda * np.log(beta_lambda)
            - gammaln(alpha_lambda)
            + alpha_lambda * u
            - beta_lambda * tau
        )
        lp_mu = 0.5 * np.log(kappa * tau / (2 * np.pi)) - 0.5 * kappa * tau * mu**2
        return ll + lp_tau + lp_mu

    mus = np.linspace(-10, 10, 41)
    us = np.linspace(-12, 8, 41)
    peak = max(log_joint(m, u) for m in mus for u in us)

    def inner(u):
        val, _ = integrate.quad(
            lambda mu: np.exp(log_joint(mu, u) - peak), -np.inf, np.inf, limit=200
        )
        return val

    val, _ = integrate.quad(inner, -30, 20, limit=200)
    return peak + np.log(val)


# ---------------------------------------------------------------------------
# Gridded exact posteriors
# ---------------------------------------------------------------------------


def grid_posterior_cdf(log_target, lo, hi, n_grid=4001):
    """Normalized cdf of exp(log_target) on a uniform grid (trapezoid rule)."""
    xs = np.linspace(lo, hi, n_grid)
    logf = np.array([log_target(x) for x in xs])
    f = np.exp(logf - logf.max())
    cdf = np.concatenate([[0.0], np.cumsum((f[1:] + f[:-1]) * 0.5 * np.diff(xs))])
    cdf /= cdf[-1]
    return xs, cdf


def ks_statistic(draws, xs, cdf):
    """Kolmogorov-Smirnov distance of draws against a gridded cdf."""
    draws = np.sort(np.asarray(draws))
    theo = np.interp(draws, xs, cdf)
    n = draws.size
    emp_hi = np.arange(1, n + 1) / n
    emp_lo = np.arange(0, n) / n
    return float(max(np.max(np.abs(emp_hi - theo)), np.max(np.abs(emp_lo - theo))))


def ks_critical(n, level=0.001):
    """Asymptotic two-sided KS critical value at the given level."""
    return float(np.sqrt(-0.5 * np.log(level / 2.0)) / np.sqrt(n))


def chi2_two_sample(a_counts, b_counts, min_expected=5.0):
    """Two-sample chi-square homogeneity test on aligned count vectors.

    Bins are pooled greedily until every expected count reaches
    ``min_expected``.  Returns (statistic, dof, pvalue).
    """
    from scipy.stats import chi2 as chi2_dist

    a = np.asarray(a_counts, dtype=float)
    b = np.asarray(b_counts, dtype=float)
    tot = a + b
    order = np.argsort(-tot)
    pooled_a, pooled_b = [], []
    acc_a = acc_b = 0.0
    na, nb = a.sum(), b.sum()
    for idx in order:
        acc_a += a[idx]
        acc_b += b[idx]
        exp_a = na * (acc_a + acc_b) / (na + nb)
        exp_b = nb * (acc_a + acc_b) / (na + nb)
        if exp_a >= min_expected and exp_b >= min_expected:
            pooled_a.append(acc_a)
            pooled_b.append(acc_b)
            acc_a = acc_b = 0.0
    if acc_a or acc_b:
        if pooled_a:
            pooled_a[-1] += acc_a
            pooled_b[-1] += acc_b
        else:
            pooled_a.append(acc_a)
            pooled_b.append(acc_b)
    a = np.array(pooled_a)
    b = np.array(pooled_b)
    if a.size < 2:
        return 0.0, 0, 1.0
    tot = a + b
    exp_a = na * tot / (na + nb)
    exp_b = nb * tot / (na + nb)
    stat = float(np.sum((a - exp_a) ** 2 / exp_a) + np.sum((b - exp_b) ** 2 / exp_b))
    dof = a.size - 1
    return stat, dof, float(chi2_dist.sf(stat, dof))


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def truncated_normal_mean_positive(mu):
    """E[Z] for Z ~ N(mu, 1) truncated to (0, inf): mu + phi(mu)/Phi(mu)."""
    mu = np.asarray(mu, dtype=float)
    return mu + norm.pdf(mu) / norm.cdf(mu)


def loo_predictive_normal_mean(y, sigma, m0, v0):
    """Exact leave-one-out predictive densities for a N(mu, sigma^2) model.

    mu ~ N(m0, v0); returns f(y_i | y_{-i}) for every i.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    out = np.empty(n)
    for i in range(n):
        rest = np.delete(y, i)
        prec = 1.0 / v0 + rest.size / sigma**2
        v_post = 1.0 / prec
        m_post = v_post * (m0 / v0 + rest.sum() / sigma**2)
        out[i] = norm.pdf(y[i], loc=m_post, scale=np.sqrt(sigma**2 + v_post))
    return out
