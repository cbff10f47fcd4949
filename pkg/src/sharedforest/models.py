"""Model wrappers over the shared-forest engine, plus default priors.

Three user-facing models:

* ``MixedResponseModel``: binary Z and continuous Y observed jointly,
  Pr(Z=1|x) = Phi(theta0 + h_theta(x)), Y ~ N(h_mu(x), sigma2), with
  h_theta and h_mu sharing one forest.
* ``GammaHurdleModel``: semicontinuous Y; Pr(Y>0|x) = Phi(theta0 +
  h_theta(x)) and (Y | Y>0) ~ Gam(alpha, alpha e^{lambda0 + h_lam(x)})
  so the conditional mean is e^{-lambda0 - h_lam(x)} (times the data
  scale) and sd/mean = alpha^{-1/2}.
* ``LogNormalHurdleModel``: semicontinuous Y; the positive part is
  log-normal with nonparametric mean mu(x) and log-precision
  lambda0 + h_lam(x), all three functions sharing one forest.

Single-component building blocks (``BinaryProbitModel``,
``GaussianRegressionModel``, and the positive-part-only hurdle halves)
support the shared-versus-separate comparisons.

Default priors follow the response-scaling conventions: leaf scales
shrink like 1/sqrt(T) so the prior over each fitted function is stable
in the ensemble size, the log-gamma leaf prior solves
digamma(a) = log(b) and trigamma(a) = a_lambda^2 / T, and the
normal-gamma mean scale is kappa = T / k_mu^2.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, ndtr, ndtri, polygamma
from scipy.stats import chi2 as chi2_dist

from . import marginals as mg
from .data import preprocess_response
from .engine import (
    GaussianComponent,
    LogGammaComponent,
    NormalGammaComponent,
    ProbitComponent,
    SharedForestSampler,
    Snapshot,
)
from .errors import ConfigError, DataError, NumericError
from .tree_prior import SplitProbabilities, TreePriorParams, sample_tree_from_prior
from .trees import tree_from_json_obj, tree_to_json_obj

__all__ = [
    "PriorConfig",
    "ChainConfig",
    "PosteriorDraws",
    "solve_loggamma_hyperparams",
    "default_prior_lognormal",
    "default_prior_gamma",
    "default_prior_mixed",
    "gamma_conditional_moments",
    "lognormal_conditional_moments",
    "prior_forest_values",
    "MixedResponseModel",
    "GammaHurdleModel",
    "LogNormalHurdleModel",
    "BinaryProbitModel",
    "GaussianRegressionModel",
    "GammaPositiveModel",
    "LogNormalPositiveModel",
    "model_from_kind",
]


@dataclass
class PriorConfig:
    """Every tunable hyperparameter, with the documented defaults."""

    gamma: float = 0.95
    zeta: float = 2.0
    num_trees: int = 50
    k_mu: float = 1.5
    k_lambda: float = 1.5
    a_lambda: float = 0.5
    halfcauchy_scale: float = 1.0  # A in alpha^{-1/2} ~ half-Cauchy(0, A)
    k_theta: float = 2.0  # sigma_theta = 3 / (k_theta sqrt(T))
    k_reg: float = 2.0  # sigma_mu (mixed) = 3 / (k_reg sqrt(T))
    sigma2_nu: float = 3.0
    sigma2_q: float = 0.9
    theta0_prior_sd: float = 10.0
    lambda0_gamma_prior: tuple = (1.0, 1.0)
    update_s: bool = True
    update_xi: bool = True
    xi_grid_size: int = 1000
    move_probs: tuple = (0.4, 0.4, 0.2)

    def tree_prior(self) -> TreePriorParams:
        return TreePriorParams(self.gamma, self.zeta)


@dataclass
class ChainConfig:
    """MCMC run lengths; the seed is mandatory (no implicit entropy)."""

    iters: int
    burnin: int
    seed: int
    thin: int = 1
    chains: int = 1

    def __post_init__(self):
        if self.iters <= self.burnin:
            raise ConfigError(
                f"iters ({self.iters}) must exceed burnin ({self.burnin})"
            )
        if self.burnin < 0 or self.thin < 1 or self.chains < 1:
            raise ConfigError("burnin >= 0, thin >= 1, chains >= 1 required")
        if self.seed is None:
            raise ConfigError("a seed is required for every run")


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """The documented seed-splitting rule for parallel chains/replications."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(chain,)))
    )


# ---------------------------------------------------------------------------
# Default-prior calculus
# ---------------------------------------------------------------------------


def solve_loggamma_hyperparams(a_lambda: float, num_trees: int, max_iter: int = 100):
    """Solve digamma(a)=log b, trigamma(a)=a_lambda^2/T for (a, b).

    Newton iteration on the strictly decreasing trigamma equation,
    started at the large-T approximation a = T / a_lambda^2; b then
    follows as exp(digamma(a)).  Residuals of both equations come out
    below 1e-10.
    """
    if a_lambda <= 0 or num_trees < 1:
        raise ConfigError("a_lambda must be positive and num_trees >= 1")
    target = a_lambda**2 / num_trees
    a = max(num_trees / a_lambda**2, 1e-3)
    for _ in range(max_iter):
        f = float(polygamma(1, a)) - target
        if abs(f) < 1e-14 * max(1.0, target):
            break
        fp = float(polygamma(2, a))
        step = f / fp
        a_new = a - step
        if a_new <= 0:
            a_new = a / 2.0
        if abs(a_new - a) < 1e-15 * a:
            a = a_new
            break
        a = a_new
    else:
        raise NumericError("trigamma root-find did not converge")
    b = float(np.exp(digamma(a)))
    if abs(float(polygamma(1, a)) - target) > 1e-10:
        raise NumericError("trigamma residual above tolerance")
    if abs(float(digamma(a)) - np.log(b)) > 1e-10:
        raise NumericError("digamma residual above tolerance")
    return float(a), b


def _sigma_theta(config: PriorConfig) -> float:
    return 3.0 / (config.k_theta * np.sqrt(config.num_trees))


def default_prior_lognormal(y, num_trees: int, config: PriorConfig) -> dict:
    """Hyperparameters for the log-normal hurdle on raw responses y.

    The finite log-responses are standardized (constants returned), the
    log-precision leaves get the (a_lambda^2 / T)-variance log-gamma
    prior, the mean leaves get kappa = T / k_mu^2, and the probit leaves
    the 3/(k_theta sqrt(T)) scale.
    """
    working, constants = preprocess_response(y, "lognormal")
    alpha_lambda, beta_lambda = solve_loggamma_hyperparams(config.a_lambda, num_trees)
    kappa = num_trees / config.k_mu**2
    return {
        "alpha_lambda": alpha_lambda,
        "beta_lambda": beta_lambda,
        "kappa": kappa,
        "sigma_theta": _sigma_theta(config),
        "a_lambda": config.a_lambda,
        **constants,
    }


def default_prior_gamma(y, num_trees: int, config: PriorConfig) -> dict:
    """Hyperparameters for the gamma hurdle on raw responses y.

    Non-zero responses are scaled to mean 1; the leaf-variance target is
    a_lambda = k_lambda * sd(log Y | Y > 0), and the dispersion prior is
    alpha^{-1/2} ~ half-Cauchy(0, A).
    """
    working, constants = preprocess_response(y, "gamma")
    y = np.asarray(y, dtype=float)
    log_pos = np.log(y[y > 0])
    sd_log = float(log_pos.std())
    if sd_log == 0.0:
        raise DataError("positive responses are constant; a_lambda would be zero")
    a_lambda = config.k_lambda * sd_log
    alpha_lambda, beta_lambda = solve_loggamma_hyperparams(a_lambda, num_trees)
    return {
        "alpha_lambda": alpha_lambda,
        "beta_lambda": beta_lambda,
        "a_lambda": a_lambda,
        "sigma_theta": _sigma_theta(config),
        "halfcauchy_scale": config.halfcauchy_scale,
        **constants,
    }


def default_prior_mixed(y, num_trees: int, config: PriorConfig) -> dict:
    """Hyperparameters for the mixed model: standardized Y, BART-style
    noise prior sigma2 ~ IG(nu/2, nu lam/2) calibrated at quantile q."""
    working, constants = preprocess_response(y, "mixed")
    sigma_hat = 1.0  # sd of the standardized response
    lam = float(chi2_dist.ppf(1.0 - config.sigma2_q, config.sigma2_nu)) * sigma_hat**2
    lam /= config.sigma2_nu
    return {
        "sigma_mu": 3.0 / (config.k_reg * np.sqrt(num_trees)),
        "sigma_theta": _sigma_theta(config),
        "sigma2_nu": config.sigma2_nu,
        "sigma2_lam": lam,
        **constants,
    }


def gamma_conditional_moments(lambda0, h_lam, alpha, scale=1.0):
    """Conditional mean and variance of the gamma positive part.

    mean = scale * exp(-(lambda0 + h_lam(x))), var = mean^2 / alpha, so
    the conditional sd is proportional to the mean with ratio
    alpha^{-1/2}.
    """
    mean = scale * np.exp(-(lambda0 + np.asarray(h_lam, dtype=float)))
    var = mean * mean / alpha
    return mean, var


def lognormal_conditional_moments(mu, sigma2):
    """m(x) = exp(mu + sigma2/2); s2(x) = m(x)^2 (exp(sigma2) - 1)."""
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    m = np.exp(mu + 0.5 * sigma2)
    s2 = m * m * np.expm1(sigma2)
    return m, s2


def prior_forest_values(
    points,
    num_trees,
    sigma_mu,
    prior_params=None,
    split_probs=None,
    rng=None,
):
    """One prior draw of h at the given points, plus tree-1 leaf labels.

    Leaf values are i.i.d. N(0, sigma_mu^2 / T), so the prior variance
    of h(x) is sigma_mu^2 for every T and, over repeated draws,
    Cov(h(x), h(x')) = sigma_mu^2 * Pr(x and x' share a leaf in one
    tree).  Returns ``(h, first_tree_leaves)``.
    """
    points = np.asarray(points, dtype=float)
    rng = rng or np.random.default_rng()
    prior_params = prior_params or TreePriorParams()
    split_probs = split_probs or SplitProbabilities.uniform(points.shape[1])
    h = np.zeros(points.shape[0])
    first_leaves = None
    leaf_sd = sigma_mu / np.sqrt(num_trees)
    for t in range(num_trees):
        tree = sample_tree_from_prior(points.shape[1], prior_params, split_probs, rng)
        vals = rng.normal(0.0, leaf_sd, size=tree.capacity)
        slots = tree.traverse(points)
        h += vals[slots]
        if t == 0:
            first_leaves = slots
    return h, first_leaves


# ---------------------------------------------------------------------------
# Posterior container
# ---------------------------------------------------------------------------


class PosteriorDraws:
    """Retained snapshots plus everything needed to predict from them."""

    def __init__(self, model, snapshots, constants, hyper, meta):
        self.model = model
        self.snapshots = snapshots
        self.constants = dict(constants)
        self.hyper = dict(hyper)
        self.meta = dict(meta)

    def __len__(self):
        return len(self.snapshots)

    def h_matrix(self, table: str, X) -> np.ndarray:
        """(S, m) matrix of sum-of-trees fits for one component table."""
        X = np.asarray(X, dtype=float)
        return np.stack([snap.component_fit(table, X) for snap in self.snapshots])

    def globals_vector(self, name: str) -> np.ndarray:
        return np.array([snap.globals_[name] for snap in self.snapshots])

    def split_prob_mean(self) -> np.ndarray:
        return np.mean([snap.split_probs for snap in self.snapshots], axis=0)

    # -- persistence ------------------------------------------------------

    def save_ndjson(self, path) -> None:
        """Newline-delimited JSON: a header record, then one per draw."""
        with open(path, "w") as fh:
            header = {
                "kind": "header",
                "model": self.model,
                "constants": self.constants,
                "hyper": self.hyper,
                "meta": self.meta,
            }
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for snap in self.snapshots:
                rec = {
                    "kind": "draw",
                    "iteration": snap.iteration,
                    "chain": snap.chain,
                    "globals": snap.globals_,
                    "split_probs": [float(v) for v in snap.split_probs],
                    "trees": [
                        tree_to_json_obj(tree, vals)
                        for tree, vals in zip(snap.trees, snap.values)
                    ],
                }
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def load_ndjson(cls, path) -> "PosteriorDraws":
        snapshots = []
        header = None
        with open(path) as fh:
            for line in fh:
                rec = json.loads(line)
                if rec["kind"] == "header":
                    header = rec
                    continue
                trees = []
                values = []
                for tobj in rec["trees"]:
                    tree, vals = tree_from_json_obj(tobj)
                    trees.append(tree)
                    values.append(vals)
                snapshots.append(
                    Snapshot(
                        iteration=rec["iteration"],
                        chain=rec["chain"],
                        trees=trees,
                        values=values,
                        globals_=rec["globals"],
                        split_probs=np.asarray(rec["split_probs"]),
                    )
                )
        if header is None:
            raise DataError(f"no header record in artifact {path!r}")
        return cls(
            model=header["model"],
            snapshots=snapshots,
            constants=header["constants"],
            hyper=header["hyper"],
            meta=header["meta"],
        )


# ---------------------------------------------------------------------------
# Model wrappers
# ---------------------------------------------------------------------------


class _BaseModel:
    kind = "base"

    def __init__(self, config: PriorConfig | None = None):
        self.config = config or PriorConfig()

    # subclasses define _components(X, y, z, hyper) and _hyper(y)

    def fit(self, X, y, chain: ChainConfig, z=None, collect=None) -> PosteriorDraws:
        """Run the sampler; returns retained posterior snapshots.

        ``collect`` optionally receives the live sampler after every
        sweep (diagnostics hooks in the harnesses).
        """
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        hyper = self._hyper(y)
        snapshots = []
        acc = []
        for c in range(chain.chains):
            rng = chain_rng(chain.seed, c)
            sampler = self._build_sampler(X, y, z, hyper, rng)
            for it in range(chain.iters):
                sampler.gibbs_sweep()
                if collect is not None:
                    collect(sampler)
                if it >= chain.burnin and (it - chain.burnin) % chain.thin == 0:
                    snapshots.append(sampler.snapshot(chain=c))
            acc.append(sampler.acceptance_rates())
        meta = {
            "chain": asdict(chain),
            "acceptance": acc,
            "num_trees": self.config.num_trees,
        }
        constants = {
            k: hyper[k] for k in ("loc", "scale") if k in hyper
        }
        return PosteriorDraws(self.kind, snapshots, constants, hyper, meta)

    def _build_sampler(self, X, y, z, hyper, rng) -> SharedForestSampler:
        comps = self._components(X, y, z, hyper)
        return SharedForestSampler(
            X,
            comps,
            num_trees=self.config.num_trees,
            prior_params=self.config.tree_prior(),
            rng=rng,
            move_probs=self.config.move_probs,
            update_s=self.config.update_s,
            update_xi_flag=self.config.update_xi,
            xi_grid_size=self.config.xi_grid_size,
        )


class MixedResponseModel(_BaseModel):
    """Shared forest over a probit component for Z and a Gaussian for Y."""

    kind = "mixed"

    def _hyper(self, y):
        return default_prior_mixed(y, self.config.num_trees, self.config)

    def _components(self, X, y, z, hyper):
        if z is None:
            raise DataError("mixed model needs a binary response column z")
        z = np.asarray(z, dtype=float)
        if not np.all((z == 0) | (z == 1)):
            raise DataError("binary response must be 0/1")
        y_std = (y - hyper["loc"]) / hyper["scale"]
        rows = np.arange(y.size)
        return [
            ProbitComponent(z > 0, hyper["sigma_theta"], self.config.theta0_prior_sd),
            GaussianComponent(
                y_std,
                rows,
                hyper["sigma_mu"],
                sigma2_nu=hyper["sigma2_nu"],
                sigma2_lam=hyper["sigma2_lam"],
            ),
        ]

    @staticmethod
    def predict_draws(draws: PosteriorDraws, X) -> dict:
        h_theta = draws.h_matrix("theta", X)
        theta0 = draws.globals_vector("theta0")[:, None]
        h_mu = draws.h_matrix("mu", X)
        loc, scale = draws.constants["loc"], draws.constants["scale"]
        return {
            "pi": ndtr(theta0 + h_theta),
            "ymean": loc + scale * h_mu,
            "sigma2": scale**2 * draws.globals_vector("sigma2")[:, None]
            * np.ones_like(h_mu),
        }


class BinaryProbitModel(_BaseModel):
    """Probit-only forest: Pr(Y=1|x) = Phi(theta0 + h_theta(x))."""

    kind = "binary"

    def _hyper(self, y):
        return {"sigma_theta": _sigma_theta(self.config)}

    def _components(self, X, y, z, hyper):
        if not np.all((y == 0) | (y == 1)):
            raise DataError("binary model needs a 0/1 response")
        return [
            ProbitComponent(y > 0, hyper["sigma_theta"], self.config.theta0_prior_sd)
        ]

    @staticmethod
    def predict_draws(draws: PosteriorDraws, X) -> dict:
        h_theta = draws.h_matrix("theta", X)
        theta0 = draws.globals_vector("theta0")[:, None]
        return {"pi": ndtr(theta0 + h_theta)}


class GaussianRegressionModel(_BaseModel):
    """Gaussian-only forest (classic homoskedastic sum-of-trees fit)."""

    kind = "gaussian"

    def _hyper(self, y):
        return default_prior_mixed(y, self.config.num_trees, self.config)

    def _components(self, X, y, z, hyper):
        y_std = (y - hyper["loc"]) / hyper["scale"]
        return [
            GaussianComponent(
                y_std,
                np.arange(y.size),
                hyper["sigma_mu"],
                sigma2_nu=hyper["sigma2_nu"],
                sigma2_lam=hyper["sigma2_lam"],
            )
        ]

    @staticmethod
    def predict_draws(draws: PosteriorDraws, X) -> dict:
        h_mu = draws.h_matrix("mu", X)
        loc, scale = draws.constants["loc"], draws.constants["scale"]
        return {
            "ymean": loc + scale * h_mu,
            "sigma2": scale**2 * draws.globals_vector("sigma2")[:, None]
            * np.ones_like(h_mu),
        }


class GammaHurdleModel(_BaseModel):
    """Shared forest over the hurdle probit and the gamma positive part."""

    kind = "gamma"

    def _hyper(self, y):
        return default_prior_gamma(y, self.config.num_trees, self.config)

    def _components(self, X, y, z, hyper):
        y_work = y / hyper["scale"]
        pos_rows = np.flatnonzero(y_work > 0)
        prior = mg.LogGammaLeafPrior(hyper["alpha_lambda"], hyper["beta_lambda"])
        return [
            ProbitComponent(y > 0, hyper["sigma_theta"], self.config.theta0_prior_sd),
            LogGammaComponent(
                y_work[pos_rows],
                pos_rows,
                prior,
                halfcauchy_scale=hyper["halfcauchy_scale"],
                lambda0_prior=self.config.lambda0_gamma_prior,
            ),
        ]

    @staticmethod
    def predict_draws(draws: PosteriorDraws, X) -> dict:
        h_theta = draws.h_matrix("theta", X)
        theta0 = draws.globals_vector("theta0")[:, None]
        h_lam = draws.h_matrix("lam", X)
        lambda0 = draws.globals_vector("lambda0")[:, None]
        alpha = draws.globals_vector("alpha")[:, None]
        scale = draws.constants["scale"]
        mean, var = gamma_conditional_moments(lambda0, h_lam, alpha, scale)
        return {"pi": ndtr(theta0 + h_theta), "m": mean, "s": np.sqrt(var)}


class GammaPositiveModel(_BaseModel):
    """Gamma positive part alone (the separate-forests comparison arm)."""

    kind = "gamma_positive"

    def _hyper(self, y):
        return default_prior_gamma(y, self.config.num_trees, self.config)

    def _components(self, X, y, z, hyper):
        y_work = y / hyper["scale"]
        if np.any(y_work <= 0):
            raise DataError("positive-part model needs strictly positive responses")
        prior = mg.LogGammaLeafPrior(hyper["alpha_lambda"], hyper["beta_lambda"])
        return [
            LogGammaComponent(
                y_work,
                np.arange(y.size),
                prior,
                halfcauchy_scale=hyper["halfcauchy_scale"],
                lambda0_prior=self.config.lambda0_gamma_prior,
            )
        ]

    @staticmethod
    def predict_draws(draws: PosteriorDraws, X) -> dict:
        h_lam = draws.h_matrix("lam", X)
        lambda0 = draws.globals_vector("lambda0")[:, None]
        alpha = draws.globals_vector("alpha")[:, None]
        scale = draws.constants["scale"]
        mean, var = gamma_conditional_moments(lambda0, h_lam, alpha, scale)
        return {"m": mean, "s": np.sqrt(var)}


class LogNormalHurdleModel(_BaseModel):
    """Shared forest over the hurdle probit and a heteroskedastic
    log-normal positive part (mean and log-variance both nonparametric)."""

    kind = "lognormal"

    def _hyper(self, y):
        return default_prior_lognormal(y, self.config.num_trees, self.config)

    def _components(self, X, y, z, hyper):
        pos_rows = np.flatnonzero(y > 0)
        w_std = (np.log(y[pos_rows]) - hyper["loc"]) / hyper["scale"]
        prior = mg.NormalGammaLeafPrior(
            hyper["alpha_lambda"], hyper["beta_lambda"], hyper["kappa"]
        )
        return [
            ProbitComponent(y > 0, hyper["sigma_theta"], self.config.theta0_prior_sd),
            NormalGammaComponent(w_std, pos_rows, prior),
        ]

    @staticmethod
    def predict_draws(draws: PosteriorDraws, X) -> dict:
        h_theta = draws.h_matrix("theta", X)
        theta0 = draws.globals_vector("theta0")[:, None]
        h_mu = draws.h_matrix("mu", X)
        h_lam = draws.h_matrix("lam", X)
        lambda0 = draws.globals_vector("lambda0")[:, None]
        loc, scale = draws.constants["loc"], draws.constants["scale"]
        mu = loc + scale * h_mu
        sigma2 = scale**2 * np.exp(-(lambda0 + h_lam))
        m, s2 = lognormal_conditional_moments(mu, sigma2)
        return {
            "pi": ndtr(theta0 + h_theta),
            "m": m,
            "s": np.sqrt(s2),
            "mu": mu,
            "sigma2": sigma2,
        }


class LogNormalPositiveModel(_BaseModel):
    """Log-normal positive part alone (separate-forests comparison arm)."""

    kind = "lognormal_positive"

    def _hyper(self, y):
        return default_prior_lognormal(y, self.config.num_trees, self.config)

    def _components(self, X, y, z, hyper):
        if np.any(y <= 0):
            raise DataError("positive-part model needs strictly positive responses")
        w_std = (np.log(y) - hyper["loc"]) / hyper["scale"]
        prior = mg.NormalGammaLeafPrior(
            hyper["alpha_lambda"], hyper["beta_lambda"], hyper["kappa"]
        )
        return [NormalGammaComponent(w_std, np.arange(y.size), prior)]

    @staticmethod
    def predict_draws(draws: PosteriorDraws, X) -> dict:
        h_mu = draws.h_matrix("mu", X)
        h_lam = draws.h_matrix("lam", X)
        lambda0 = draws.globals_vector("lambda0")[:, None]
        loc, scale = draws.constants["loc"], draws.constants["scale"]
        mu = loc + scale * h_mu
        sigma2 = scale**2 * np.exp(-(lambda0 + h_lam))
        m, s2 = lognormal_conditional_moments(mu, sigma2)
        return {"m": m, "s": np.sqrt(s2), "mu": mu, "sigma2": sigma2}


_MODEL_KINDS = {
    cls.kind: cls
    for cls in (
        MixedResponseModel,
        BinaryProbitModel,
        GaussianRegressionModel,
        GammaHurdleModel,
        GammaPositiveModel,
        LogNormalHurdleModel,
        LogNormalPositiveModel,
    )
}


def model_from_kind(kind: str, config: PriorConfig | None = None) -> _BaseModel:
    if kind not in _MODEL_KINDS:
        raise ConfigError(
            f"unknown model kind {kind!r}; choose from {sorted(_MODEL_KINDS)}"
        )
    return _MODEL_KINDS[kind](config)


def predict_draws(draws: PosteriorDraws, X) -> dict:
    """Dispatch per-draw predictions on the artifact's model kind."""
    return _MODEL_KINDS[draws.model].predict_draws(draws, X)


def predict_summary(draws: PosteriorDraws, X, level: float = 0.95) -> dict:
    """Posterior means and equal-tailed credible intervals per quantity."""
    mats = predict_draws(draws, X)
    lo_q, hi_q = 0.5 * (1 - level), 1 - 0.5 * (1 - level)
    out = {}
    for name, mat in mats.items():
        out[name + "_mean"] = mat.mean(axis=0)
        out[name + "_lo"] = np.quantile(mat, lo_q, axis=0)
        out[name + "_hi"] = np.quantile(mat, hi_q, axis=0)
    return out


# ---------------------------------------------------------------------------
# Observation log densities (for LPML/CPO and residuals)
# ---------------------------------------------------------------------------


def log_observation_densities(draws: PosteriorDraws, X, y) -> dict:
    """Per-draw, per-observation log densities of the fitted model.

    Returns a dict with keys among {"binary", "positive", "full"}:
    ``binary`` is the Bernoulli(Y>0) part, ``positive`` the positive
    density given Y>0 (columns are the positive rows), ``full`` the
    hurdle observation density (zeros contribute 1-pi, positives
    pi times the positive density).  All on the original response scale.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    kind = draws.model
    out = {}
    if kind == "mixed":
        raise ConfigError("observation densities for the mixed model use 'gaussian'")
    if kind == "gaussian":
        mats = predict_draws(draws, X)
        resid = y[None, :] - mats["ymean"]
        s2 = mats["sigma2"]
        out["full"] = -0.5 * np.log(2 * np.pi * s2) - 0.5 * resid**2 / s2
        return out

    pos = y > 0
    if kind in ("binary", "gamma", "lognormal"):
        mats = predict_draws(draws, X)
        if "pi" in mats:
            pi = np.clip(mats["pi"], 1e-12, 1 - 1e-12)
            out["binary"] = np.where(pos[None, :], np.log(pi), np.log1p(-pi))
    if kind in ("gamma", "gamma_positive"):
        base = draws if kind == "gamma_positive" else draws
        h_lam = base.h_matrix("lam", X[pos] if kind == "gamma" else X)
        lambda0 = base.globals_vector("lambda0")[:, None]
        alpha = base.globals_vector("alpha")[:, None]
        scale = base.constants["scale"]
        yy = (y[pos] if kind == "gamma" else y)[None, :] / scale
        rate = alpha * np.exp(lambda0 + h_lam)
        out["positive"] = (
            alpha * np.log(rate)
            + (alpha - 1.0) * np.log(yy)
            - rate * yy
            - gammaln(alpha)
            - np.log(scale)
        )
    if kind in ("lognormal", "lognormal_positive"):
        Xp = X[pos] if kind == "lognormal" else X
        yp = y[pos] if kind == "lognormal" else y
        h_mu = draws.h_matrix("mu", Xp)
        h_lam = draws.h_matrix("lam", Xp)
        lambda0 = draws.globals_vector("lambda0")[:, None]
        loc, scale = draws.constants["loc"], draws.constants["scale"]
        mu = loc + scale * h_mu
        s2 = scale**2 * np.exp(-(lambda0 + h_lam))
        logy = np.log(yp)[None, :]
        out["positive"] = (
            -0.5 * np.log(2 * np.pi * s2) - 0.5 * (logy - mu) ** 2 / s2 - logy
        )
    if "binary" in out and "positive" in out:
        full = out["binary"].copy()
        full[:, pos] += out["positive"]
        out["full"] = full
    elif "positive" in out and "binary" not in out:
        out["full"] = out["positive"]
    elif "binary" in out and "positive" not in out:
        out["full"] = out["binary"]
    return out
