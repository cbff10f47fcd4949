"""Simulation harness and posterior diagnostics.

The simulation study draws X uniform on [0,1]^P, builds the mixed
response from the five-variable benchmark surface

    h(x) = 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5,

and compares a shared-forest fit against separate per-response forests
by the cross-entropy between the true and estimated success
probabilities, integrated over the predictor space by Monte Carlo.
The probit signal uses h standardized exactly (its mean and sd under
uniform X have closed forms through the sine integrals Si/Ci); the
continuous response uses h as displayed.

Diagnostics: conditional predictive ordinates via the harmonic-mean
identity CPO_i = [S^-1 sum_s 1/f(Y_i | theta_s)]^-1 and their log sum
(LPML), plus generalized residuals Phi^-1(F_hat(Y_i)) for the positive
part, which reduce to standardized residuals under the log-normal
model.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammainc, ndtr, ndtri, sici

from .errors import ConfigError, DataError
from .models import (
    BinaryProbitModel,
    ChainConfig,
    GammaHurdleModel,
    GammaPositiveModel,
    LogNormalHurdleModel,
    LogNormalPositiveModel,
    MixedResponseModel,
    PosteriorDraws,
    PriorConfig,
    chain_rng,
    log_observation_densities,
    predict_draws,
)

__all__ = [
    "friedman",
    "FRIEDMAN_MEAN",
    "FRIEDMAN_SD",
    "standardized_friedman",
    "SimulationSpec",
    "simulate_mixed",
    "simulate_gamma_hurdle",
    "simulate_lognormal_hurdle",
    "cross_entropy_loss",
    "loss_monte_carlo",
    "lpml",
    "generalized_residuals",
    "run_share_comparison",
    "compare_lpml_hurdle",
]

_EULER_GAMMA = 0.5772156649015329


def friedman(X) -> np.ndarray:
    """The five-variable benchmark surface; extra coordinates are ignored."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] < 5:
        raise DataError("benchmark surface needs at least 5 predictors")
    return (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
    )


def _friedman_moments():
    # E sin(pi U V) = Cin(pi)/pi with Cin(z) = euler_gamma + ln z - Ci(z);
    # E sin^2(pi U V) = 1/2 - Si(2 pi)/(4 pi).  U, V iid Uniform(0,1).
    si_pi, ci_pi = sici(np.pi)
    si_2pi, _ = sici(2 * np.pi)
    e_sin = (_EULER_GAMMA + np.log(np.pi) - ci_pi) / np.pi
    e_sin2 = 0.5 - si_2pi / (4 * np.pi)
    var_sin = e_sin2 - e_sin**2
    mean = 10.0 * e_sin + 20.0 / 12.0 + 10.0 * 0.5 + 5.0 * 0.5
    var = (
        100.0 * var_sin
        + 400.0 * (1.0 / 80.0 - 1.0 / 144.0)
        + 100.0 / 12.0
        + 25.0 / 12.0
    )
    return float(mean), float(np.sqrt(var))


FRIEDMAN_MEAN, FRIEDMAN_SD = _friedman_moments()


def standardized_friedman(X) -> np.ndarray:
    """The benchmark surface centered and scaled to mean 0 / sd 1 under
    uniform X (exact constants, not sample estimates)."""
    return (friedman(X) - FRIEDMAN_MEAN) / FRIEDMAN_SD


@dataclass
class SimulationSpec:
    """One cell of the simulation grid.  Identical specs (seed included)
    produce bit-identical datasets."""

    n: int
    p: int
    sigma: float = 1.0
    sigma_theta: float = 4.0
    replications: int = 1
    num_trees: int = 50
    shared: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 5:
            raise ConfigError("need n >= 1 and p >= 5 (benchmark surface)")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")


def simulate_mixed(spec: SimulationSpec, rng=None):
    """Mixed binary/continuous data from the benchmark surface.

    Pr(Z=1 | x) = Phi(sigma_theta * h_std(x)) with h_std the exactly
    standardized surface; Y | x ~ N(h(x), sigma^2) with h as displayed;
    Z and Y independent given x.  Returns (X, y, z, pi_true).
    """
    rng = rng or np.random.default_rng(spec.seed)
    X = rng.uniform(size=(spec.n, spec.p))
    h_raw = friedman(X)
    h_std = (h_raw - FRIEDMAN_MEAN) / FRIEDMAN_SD
    pi = ndtr(spec.sigma_theta * h_std)
    z = (rng.uniform(size=spec.n) < pi).astype(float)
    y = h_raw + spec.sigma * rng.standard_normal(spec.n)
    return X, y, z, pi


def simulate_gamma_hurdle(
    n, p, rng, theta_scale=1.0, theta_shift=0.3, lam_scale=0.8, alpha=3.0
):
    """Semicontinuous data with shared structure across hurdle and mean.

    pi(x) = Phi(theta_shift + theta_scale * g(x)) and (Y | Y>0) ~
    Gam(alpha, alpha e^{lam_scale * g(x)}) with g the standardized
    benchmark surface, so both parts move with the same features.
    Returns (X, y, truth) with truth = {"pi", "m", "alpha"}.
    """
    X = rng.uniform(size=(n, p))
    g = standardized_friedman(X)
    pi = ndtr(theta_shift + theta_scale * g)
    pos = rng.uniform(size=n) < pi
    mean_pos = np.exp(-lam_scale * g)
    y = np.zeros(n)
    y[pos] = rng.gamma(alpha, mean_pos[pos] / alpha)
    y[pos] = np.maximum(y[pos], 1e-300)
    return X, y, {"pi": pi, "m": mean_pos, "alpha": alpha}


def simulate_lognormal_hurdle(
    n,
    p,
    rng,
    theta_scale=1.0,
    theta_shift=0.3,
    mu_scale=0.9,
    sigma_low=0.4,
    sigma_high=None,
    split_axis=5,
):
    """Semicontinuous log-normal data, optionally heteroskedastic.

    log(Y | Y>0) ~ N(mu_scale * g(x), sigma(x)^2) where sigma(x) jumps
    from sigma_low to sigma_high across x[split_axis] (constant when
    sigma_high is None).  Returns (X, y, truth).
    """
    X = rng.uniform(size=(n, p))
    g = standardized_friedman(X)
    pi = ndtr(theta_shift + theta_scale * g)
    pos = rng.uniform(size=n) < pi
    mu = mu_scale * g
    if sigma_high is None:
        sigma = np.full(n, sigma_low)
    else:
        sigma = np.where(X[:, split_axis] <= 0.5, sigma_low, sigma_high)
    y = np.zeros(n)
    y[pos] = np.exp(mu[pos] + sigma[pos] * rng.standard_normal(int(pos.sum())))
    m = np.exp(mu + 0.5 * sigma**2)
    s2 = m * m * np.expm1(sigma**2)
    return X, y, {"pi": pi, "m": m, "s2": s2, "mu": mu, "sigma": sigma}


# ---------------------------------------------------------------------------
# Cross-entropy loss
# ---------------------------------------------------------------------------

_PI_CLAMP = 1e-6


def cross_entropy_loss(pi_true, pi_hat) -> float:
    """Monte Carlo cross-entropy between true and estimated probabilities.

    Mean over the supplied points of pi log(pi/pi_hat) +
    (1-pi) log((1-pi)/(1-pi_hat)); estimates are clamped to
    [1e-6, 1 - 1e-6].  Nonnegative, zero iff pi_hat = pi pointwise.
    """
    pi = np.asarray(pi_true, dtype=float)
    ph = np.clip(np.asarray(pi_hat, dtype=float), _PI_CLAMP, 1.0 - _PI_CLAMP)
    with np.errstate(divide="ignore", invalid="ignore"):
        term1 = np.where(pi > 0, pi * (np.log(pi) - np.log(ph)), 0.0)
        term2 = np.where(pi < 1, (1 - pi) * (np.log1p(-pi) - np.log1p(-ph)), 0.0)
    return float(np.mean(term1 + term2))


def loss_monte_carlo(pi_fn_true, pi_fn_hat, p, n_points=10**4, seed=0) -> float:
    """Loss on a dedicated fresh uniform sample of the predictor space."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(9,)))
    X = rng.uniform(size=(n_points, p))
    return cross_entropy_loss(pi_fn_true(X), pi_fn_hat(X))


# ---------------------------------------------------------------------------
# LPML / CPO
# ---------------------------------------------------------------------------


def lpml(log_f, truncate=0.999):
    """Harmonic-mean CPO estimates from per-draw log densities.

    Parameters
    ----------
    log_f : ndarray, shape (S, n)
        log f(Y_i | theta_s) for retained draws s and observations i.
    truncate : float
        Importance weights 1/f are winsorized at this per-observation
        quantile for stability (documented estimator choice).

    Returns
    -------
    dict with "lpml", "cpo" (length n), "flagged" (observations whose
    density vanished for every draw; excluded from the sum).
    """
    log_f = np.asarray(log_f, dtype=float)
    if log_f.ndim != 2:
        raise ConfigError("log_f must be (draws, observations)")
    s = log_f.shape[0]
    log_w = -log_f  # importance weights 1/f
    flagged = np.all(~np.isfinite(log_w), axis=0) | np.all(np.isinf(-log_f), axis=0)
    if s > 1 and truncate is not None:
        cap = np.quantile(log_w, truncate, axis=0)
        log_w = np.minimum(log_w, cap[None, :])
    # log CPO_i = -log mean_s exp(log_w_si)
    m = log_w.max(axis=0)
    with np.errstate(invalid="ignore"):
        log_mean_w = m + np.log(np.mean(np.exp(log_w - m[None, :]), axis=0))
    cpo = -log_mean_w
    flagged = flagged | ~np.isfinite(cpo)
    total = float(np.sum(cpo[~flagged]))
    return {"lpml": total, "cpo": cpo, "flagged": int(flagged.sum())}


def model_lpml(draws: PosteriorDraws, X, y, part="full") -> dict:
    """LPML of a fitted model on data (part: "full", "binary", "positive")."""
    dens = log_observation_densities(draws, X, y)
    if part not in dens:
        raise ConfigError(f"model {draws.model!r} has no {part!r} density part")
    return lpml(dens[part])


# ---------------------------------------------------------------------------
# Generalized residuals
# ---------------------------------------------------------------------------

_RESID_CLAMP = 8.0


def generalized_residuals(draws: PosteriorDraws, X, y, method="mixture"):
    """Phi^-1 of the fitted positive-part cdf at the observed values.

    Positive rows only.  ``method="mixture"`` evaluates the
    posterior-mean cdf (averaging the per-draw cdfs); ``"plugin"``
    evaluates the cdf at the posterior means of the parameters, which
    for the log-normal model is identical to the standardized residual
    (log Y - mu_hat)/sigma_hat.  Residuals whose cdf value degenerates
    to 0 or 1 numerically are clamped at +-8 and counted.

    Returns dict with "residuals", "rows", "clamped".
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    pos = y > 0
    rows = np.flatnonzero(pos)
    Xp, yp = X[rows], y[rows]
    kind = draws.model
    if kind in ("lognormal", "lognormal_positive"):
        h_mu = draws.h_matrix("mu", Xp)
        h_lam = draws.h_matrix("lam", Xp)
        lambda0 = draws.globals_vector("lambda0")[:, None]
        loc, scale = draws.constants["loc"], draws.constants["scale"]
        mu = loc + scale * h_mu
        sig = scale * np.exp(-0.5 * (lambda0 + h_lam))
        logy = np.log(yp)[None, :]
        if method == "plugin":
            cdf = ndtr((np.log(yp) - mu.mean(axis=0)) / sig.mean(axis=0))
        else:
            cdf = ndtr((logy - mu) / sig).mean(axis=0)
    elif kind in ("gamma", "gamma_positive"):
        h_lam = draws.h_matrix("lam", Xp)
        lambda0 = draws.globals_vector("lambda0")[:, None]
        alpha = draws.globals_vector("alpha")[:, None]
        scale = draws.constants["scale"]
        rate = alpha * np.exp(lambda0 + h_lam) / scale
        if method == "plugin":
            cdf = gammainc(alpha.mean(), rate.mean(axis=0) * yp)
        else:
            cdf = gammainc(alpha, rate * yp[None, :]).mean(axis=0)
    else:
        raise ConfigError(f"no positive-part cdf for model kind {kind!r}")
    eps = np.finfo(float).tiny
    clamped = (cdf <= eps) | (cdf >= 1.0 - 1e-16)
    r = np.empty_like(cdf)
    r[~clamped] = ndtri(cdf[~clamped])
    r[clamped] = np.sign(cdf[clamped] - 0.5) * _RESID_CLAMP
    r = np.clip(r, -_RESID_CLAMP, _RESID_CLAMP)
    return {"residuals": r, "rows": rows, "clamped": int(clamped.sum())}


# ---------------------------------------------------------------------------
# Shared-versus-separate comparison harnesses
# ---------------------------------------------------------------------------


def _one_mixed_cell(args):
    (n, p, sigma, sigma_theta, num_trees, seed, rep, iters, burnin, thin) = args
    spec = SimulationSpec(
        n=n, p=p, sigma=sigma, sigma_theta=sigma_theta, num_trees=num_trees
    )
    data_rng = chain_rng(seed, rep)
    X, y, z, _ = simulate_mixed(spec, data_rng)
    cc = ChainConfig(iters=iters, burnin=burnin, thin=thin, seed=seed * 1000 + rep)
    cfg = PriorConfig(num_trees=num_trees)

    shared = MixedResponseModel(cfg).fit(X, y, cc, z=z)
    separate = BinaryProbitModel(cfg).fit(X, z, cc)

    def pi_true(pts):
        return ndtr(sigma_theta * standardized_friedman(pts))

    def pi_hat_of(draws):
        def f(pts):
            return predict_draws(draws, pts)["pi"].mean(axis=0)

        return f

    loss_shared = loss_monte_carlo(pi_true, pi_hat_of(shared), p, seed=seed)
    loss_separate = loss_monte_carlo(pi_true, pi_hat_of(separate), p, seed=seed)
    return {
        "n": n,
        "p": p,
        "sigma_theta": sigma_theta,
        "num_trees": num_trees,
        "rep": rep,
        "loss_shared": loss_shared,
        "loss_separate": loss_separate,
    }


def run_share_comparison(
    grid,
    replications=10,
    n=250,
    sigma=1.0,
    sigma_theta=4.0,
    seed=0,
    iters=600,
    burnin=300,
    thin=3,
    n_jobs=1,
):
    """Loss table for shared vs separate forests over a simulation grid.

    ``grid`` is a list of dicts with any of the keys {"p", "num_trees"}
    (missing entries fall back to p=20 / num_trees=50).  Every cell and
    replication derives its seeds from the master seed by the documented
    splitting rule, and both fits of a replication see bit-identical
    training data.  The separate arm fits only the binary forest: the
    cross-entropy Loss is a functional of pi_hat alone, so the separate
    regression forest cannot affect it.

    Returns a list of per-replication records (one dict per row).
    """
    jobs = []
    for cell_idx, cell in enumerate(grid):
        p = int(cell.get("p", 20))
        num_trees = int(cell.get("num_trees", 50))
        for rep in range(replications):
            jobs.append(
                (
                    n,
                    p,
                    sigma,
                    sigma_theta,
                    num_trees,
                    seed + 7919 * cell_idx,
                    rep,
                    iters,
                    burnin,
                    thin,
                )
            )
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(_one_mixed_cell, jobs))
    else:
        rows = [_one_mixed_cell(job) for job in jobs]
    return rows


def summarize_comparison(rows):
    """Mean losses per (p, num_trees) cell from per-replication rows."""
    cells = {}
    for row in rows:
        key = (row["p"], row["num_trees"])
        cells.setdefault(key, {"loss_shared": [], "loss_separate": []})
        cells[key]["loss_shared"].append(row["loss_shared"])
        cells[key]["loss_separate"].append(row["loss_separate"])
    out = []
    for (p, num_trees), vals in sorted(cells.items()):
        out.append(
            {
                "p": p,
                "num_trees": num_trees,
                "mean_loss_shared": float(np.mean(vals["loss_shared"])),
                "mean_loss_separate": float(np.mean(vals["loss_separate"])),
                "replications": len(vals["loss_shared"]),
            }
        )
    return out


def compare_lpml_hurdle(X, y, kind, chain: ChainConfig, config=None):
    """Shared vs separate LPML split: Regression / Binary / Total rows.

    The shared arm fits the hurdle model (one forest across the binary
    and positive components).  The separate arm fits an independent
    binary forest on I(Y>0) and an independent positive-part forest on
    the Y>0 rows.  Binary and Regression LPMLs are harmonic-mean CPO
    sums of the respective densities; Total = Regression + Binary
    (the split is additive by construction).
    """
    config = config or PriorConfig()
    if kind == "gamma":
        shared_model, pos_model = GammaHurdleModel, GammaPositiveModel
    elif kind == "lognormal":
        shared_model, pos_model = LogNormalHurdleModel, LogNormalPositiveModel
    else:
        raise ConfigError("hurdle comparison supports kinds 'gamma' and 'lognormal'")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    pos = y > 0

    shared = shared_model(config).fit(X, y, chain)
    dens = log_observation_densities(shared, X, y)
    shared_binary = lpml(dens["binary"])["lpml"]
    shared_reg = lpml(dens["positive"])["lpml"]

    sep_chain = ChainConfig(
        iters=chain.iters,
        burnin=chain.burnin,
        seed=chain.seed + 1,
        thin=chain.thin,
        chains=chain.chains,
    )
    binary = BinaryProbitModel(config).fit(X, pos.astype(float), sep_chain)
    positive = pos_model(config).fit(X[pos], y[pos], sep_chain)
    sep_binary = lpml(log_observation_densities(binary, X, y)["binary"])["lpml"]
    sep_reg = lpml(log_observation_densities(positive, X[pos], y[pos])["positive"])[
        "lpml"
    ]

    return {
        "rows": ["Regression", "Binary", "Total"],
        "shared": [shared_reg, shared_binary, shared_reg + shared_binary],
        "separate": [sep_reg, sep_binary, sep_reg + sep_binary],
    }
