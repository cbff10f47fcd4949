"""The shared-forest sampler: one set of trees, M model components.

Every component m contributes its own leaf parameters to the shared
trees; the tree-structure moves are scored with the integrated
likelihood, which factorizes over leaves and components, so a single
Metropolis-Hastings update accounts for all components at once.  The
per-tree flow is classic backfitting: remove tree t's contribution from
each component's fit, score the current and proposed structures on the
resulting partial residuals, accept or reject, then redraw tree t's
leaf values from their closed-form full conditionals (also on
rejection, which is a valid Gibbs refresh and helps mixing).

One sweep = trees in ascending order, then component-specific global
parameters, then splitting proportions s and concentration xi, then the
latent sign-constrained Gaussians.  A sweep touches no entropy source
other than the Generator passed in, so runs are reproducible bit for
bit.  Full fits are re-synced from the per-tree contribution matrices
at the end of every sweep, keeping incremental drift below 1e-10.

Components see either all observations or only the positive-response
rows; both index into one shared (n, T) leaf-assignment matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from . import marginals as mg
from .errors import NumericError
from .samplers import sample_truncated_normal, slice_sample
from .tree_prior import (
    SplitProbabilities,
    TreePriorParams,
    axis_usage_counts,
    propose_move,
    tree_log_prior,
    update_split_probabilities,
    update_xi,
)
from .trees import Tree, evaluate_forest

__all__ = [
    "ProbitComponent",
    "GaussianComponent",
    "LogGammaComponent",
    "NormalGammaComponent",
    "SharedForestSampler",
    "Snapshot",
]

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _safe_div(a, b):
    out = np.zeros_like(a, dtype=float)
    np.divide(a, b, out=out, where=b > 0)
    return out


# ---------------------------------------------------------------------------
# Components
# ---------------------------------------------------------------------------


class ProbitComponent:
    """Binary part: latent Z_i ~ N(theta0 + h_theta(x), 1), sign-linked to Y.

    Leaf parameters theta_{tl} ~ N(0, sigma_theta^2).  Owns the latent
    vector and the intercept theta0 (normal prior, conjugate update).
    """

    tables = ("theta",)

    def __init__(self, positive, sigma_theta, theta0_prior_sd=10.0):
        self.positive = np.asarray(positive, dtype=bool)
        self.sigma_theta = float(sigma_theta)
        self.theta0_prior_sd = float(theta0_prior_sd)
        n = self.positive.size
        self.rows = np.arange(n)
        frac = self.positive.mean() if n else 0.5
        frac = min(max(frac, 1.0 / (n + 2.0)), (n + 1.0) / (n + 2.0))
        self.theta0 = float(ndtri(frac))
        self.z = None

    def init_state(self, rng):
        self.z = self.theta0 + np.zeros(self.positive.size)
        self.z = sample_truncated_normal(self.z, self.positive, rng)

    def payload(self, partials):
        return self.z - self.theta0 - partials["theta"]

    def stats(self, resid, cidx, n_leaves):
        n = np.bincount(cidx, minlength=n_leaves).astype(float)
        mean = _safe_div(np.bincount(cidx, weights=resid, minlength=n_leaves), n)
        dev = resid - mean[cidx]
        m2 = np.bincount(cidx, weights=dev * dev, minlength=n_leaves)
        return n, mean, m2

    def log_marginal(self, stats):
        n, mean, m2 = stats
        return mg.probit_log_marginal(n, mean, m2, self.sigma_theta)

    def draw_leaf_values(self, stats, rng):
        n, mean, _ = stats
        return {"theta": mg.draw_theta_leaf(n, mean, self.sigma_theta, rng)}

    def update_globals(self, fulls, rng):
        resid = self.z - fulls["theta"]
        prior_prec = self.theta0_prior_sd**-2.0
        prec = resid.size + prior_prec
        mean = resid.sum() / prec
        self.theta0 = float(mean + rng.standard_normal() / np.sqrt(prec))

    def sample_latent(self, fulls, rng):
        mean = self.theta0 + fulls["theta"]
        self.z = sample_truncated_normal(mean, self.positive, rng)

    def globals_dict(self):
        return {"theta0": self.theta0}


class GaussianComponent:
    """Homoskedastic regression part: R_i ~ N(h_mu(x), sigma2).

    Leaf prior N(0, sigma_mu^2); sigma2 carries an inverse-gamma
    (nu/2, nu*lam/2) prior with a conjugate update.
    """

    tables = ("mu",)

    def __init__(self, y, rows, sigma_mu, sigma2_nu=3.0, sigma2_lam=None, sigma2=1.0):
        self.y = np.asarray(y, dtype=float)
        self.rows = np.asarray(rows)
        self.sigma_mu = float(sigma_mu)
        self.sigma2_nu = float(sigma2_nu)
        self.sigma2_lam = float(sigma2_lam) if sigma2_lam is not None else 1.0
        self.sigma2 = float(sigma2)

    def init_state(self, rng):
        pass

    def payload(self, partials):
        return self.y - partials["mu"]

    def stats(self, resid, cidx, n_leaves):
        prec = 1.0 / self.sigma2
        n = np.bincount(cidx, minlength=n_leaves).astype(float)
        mean = _safe_div(np.bincount(cidx, weights=resid, minlength=n_leaves), n)
        dev = resid - mean[cidx]
        m2 = prec * np.bincount(cidx, weights=dev * dev, minlength=n_leaves)
        return n, n * prec, mean, m2, -n * np.log(self.sigma2)

    def log_marginal(self, stats):
        n, w, mean, m2, slog = stats
        return mg.gaussian_log_marginal(n, w, mean, m2, self.sigma_mu, slog)

    def draw_leaf_values(self, stats, rng):
        _, w, mean, _, _ = stats
        return {"mu": mg.draw_gaussian_leaf(w, mean, self.sigma_mu, rng)}

    def update_globals(self, fulls, rng):
        resid = self.y - fulls["mu"]
        shape = 0.5 * (self.sigma2_nu + resid.size)
        rate = 0.5 * (self.sigma2_nu * self.sigma2_lam + resid @ resid)
        self.sigma2 = float(rate / rng.gamma(shape))

    def globals_dict(self):
        return {"sigma2": self.sigma2}


class LogGammaComponent:
    """Gamma positive part: Y_i ~ Gam(alpha, alpha e^{lambda0 + h_lam(x)}).

    Leaf parameters lambda_{tl} ~ logGam(alpha_lambda, beta_lambda).
    The dispersion alpha has alpha^{-1/2} ~ half-Cauchy(0, A) (slice
    update on log alpha); the baseline has e^{lambda0} ~ Gam(a0, b0)
    with a conjugate update.
    """

    tables = ("lam",)

    def __init__(
        self,
        y,
        rows,
        prior: mg.LogGammaLeafPrior,
        halfcauchy_scale=1.0,
        alpha=1.0,
        lambda0=0.0,
        lambda0_prior=(1.0, 1.0),
    ):
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise ValueError("gamma component requires strictly positive responses")
        self.y = y
        self.log_y = np.log(y)
        self.rows = np.asarray(rows)
        self.prior = prior
        self.halfcauchy_scale = float(halfcauchy_scale)
        self.alpha = float(alpha)
        self.lambda0 = float(lambda0)
        self.lambda0_prior = lambda0_prior

    def init_state(self, rng):
        pass

    def payload(self, partials):
        log_eta = np.log(self.alpha) + self.lambda0 + partials["lam"]
        y_eta = self.y * np.exp(log_eta)
        return log_eta, y_eta

    def stats(self, payload, cidx, n_leaves):
        log_eta, y_eta = payload
        n = np.bincount(cidx, minlength=n_leaves).astype(float)
        s_ye = np.bincount(cidx, weights=y_eta, minlength=n_leaves)
        s_le = np.bincount(cidx, weights=log_eta, minlength=n_leaves)
        s_ly = np.bincount(cidx, weights=self.log_y, minlength=n_leaves)
        return n, s_ye, s_le, s_ly

    def log_marginal(self, stats):
        n, s_ye, s_le, s_ly = stats
        return mg.gamma_log_marginal(n, s_ye, s_le, s_ly, self.prior, self.alpha)

    def draw_leaf_values(self, stats, rng):
        n, s_ye, _, _ = stats
        return {"lam": mg.draw_lambda_leaf(n, s_ye, self.prior, self.alpha, rng)}

    def update_globals(self, fulls, rng):
        h = fulls["lam"]
        n = self.y.size
        # Conjugate baseline: e^{lambda0} ~ Gam(a0 + alpha n, b0 + alpha sum e^h Y).
        a0, b0 = self.lambda0_prior
        s_eh_y = float(np.exp(h) @ self.y)
        shape = a0 + self.alpha * n
        rate = b0 + self.alpha * s_eh_y
        self.lambda0 = float(np.log(rng.gamma(shape) / rate))
        # Slice update of u = log alpha under alpha^{-1/2} ~ half-Cauchy(0, A).
        c_l = float(np.sum(self.lambda0 + h))
        c_ly = float(np.sum(self.log_y))
        c_ey = float(np.exp(self.lambda0 + h) @ self.y)
        a_scale2 = self.halfcauchy_scale**2

        def log_target(u):
            if abs(u) > 30.0:
                return -np.inf
            alpha = np.exp(u)
            from scipy.special import gammaln

            ll = (
                n * alpha * u
                + alpha * c_l
                + (alpha - 1.0) * c_ly
                - alpha * c_ey
                - n * gammaln(alpha)
            )
            lp = -0.5 * u - np.log1p(np.exp(-u) / a_scale2)
            return ll + lp

        self.alpha = float(np.exp(slice_sample(np.log(self.alpha), log_target, rng)))

    def globals_dict(self):
        return {"alpha": self.alpha, "lambda0": self.lambda0}


class NormalGammaComponent:
    """Log-normal positive part with nonparametric mean and log-variance.

    W_i ~ N(mu(x), sigma2(x)) with sigma^{-2}(x) = e^{lambda0 + h_lam(x)};
    per leaf, (mu_{tl}, tau_{tl}) carry the normal-gamma prior.  The
    baseline lambda0 has a half-Cauchy(0, 1) prior on sigma0 =
    e^{-lambda0/2}, shrinking towards a homoskedastic model (slice
    update).
    """

    tables = ("mu", "lam")

    def __init__(self, w, rows, prior: mg.NormalGammaLeafPrior, lambda0=0.0):
        self.w_obs = np.asarray(w, dtype=float)
        self.rows = np.asarray(rows)
        self.prior = prior
        self.lambda0 = float(lambda0)

    def init_state(self, rng):
        pass

    def payload(self, partials):
        log_nu = self.lambda0 + partials["lam"]
        nu = np.exp(log_nu)
        q = self.w_obs - partials["mu"]
        return nu, log_nu, q

    def stats(self, payload, cidx, n_leaves):
        nu, log_nu, q = payload
        n = np.bincount(cidx, minlength=n_leaves).astype(float)
        w = np.bincount(cidx, weights=nu, minlength=n_leaves)
        qbar = _safe_div(np.bincount(cidx, weights=nu * q, minlength=n_leaves), w)
        dev = q - qbar[cidx]
        m2 = np.bincount(cidx, weights=nu * dev * dev, minlength=n_leaves)
        slog = np.bincount(cidx, weights=log_nu, minlength=n_leaves)
        return n, w, qbar, m2, slog

    def log_marginal(self, stats):
        n, w, qbar, m2, slog = stats
        return mg.normal_gamma_log_marginal(n, w, qbar, m2, self.prior, slog)

    def draw_leaf_values(self, stats, rng):
        n, w, qbar, m2, _ = stats
        mu, tau = mg.draw_mu_tau_leaf(n, w, qbar, m2, self.prior, rng)
        return {"mu": mu, "lam": np.log(tau)}

    def update_globals(self, fulls, rng):
        h = fulls["lam"]
        resid = self.w_obs - fulls["mu"]
        a = float(np.exp(h) @ (resid * resid))
        n = self.w_obs.size

        def log_target(lam0):
            if abs(lam0) > 40.0:
                return -np.inf
            ll = 0.5 * n * lam0 - 0.5 * np.exp(lam0) * a
            lp = -0.5 * lam0 - np.log1p(np.exp(-lam0))
            return ll + lp

        self.lambda0 = float(slice_sample(self.lambda0, log_target, rng))

    def globals_dict(self):
        return {"lambda0": self.lambda0}


# ---------------------------------------------------------------------------
# Posterior snapshots
# ---------------------------------------------------------------------------


@dataclass
class Snapshot:
    """Everything needed to predict from one retained posterior draw."""

    iteration: int
    chain: int
    trees: list
    values: list  # per tree: {table: capacity-sized array}
    globals_: dict
    split_probs: np.ndarray = None

    def component_fit(self, table: str, X: np.ndarray) -> np.ndarray:
        """Sum-of-trees fit h_m(x) for one component table."""
        return evaluate_forest(self.trees, [v[table] for v in self.values], X)


# ---------------------------------------------------------------------------
# The sampler
# ---------------------------------------------------------------------------


class SharedForestSampler:
    """MCMC state and update schedule for one shared forest.

    Parameters
    ----------
    X : ndarray, shape (n, P)
        Predictors, quantile-normalized into [0, 1].
    components : list
        Component objects (see module classes), each bound to its rows.
    num_trees : int
        Ensemble size T.
    prior_params : TreePriorParams
    split_probs : SplitProbabilities or None
        Starts uniform with xi = P when None.
    rng : numpy Generator
        The only entropy source used by the sampler.
    move_probs : tuple
        Grow/prune/change mix.
    update_s, update_xi_flag : bool
        Enable the Dirichlet splitting-proportion and concentration updates.
    """

    def __init__(
        self,
        X,
        components,
        num_trees,
        prior_params=None,
        split_probs=None,
        rng=None,
        move_probs=(0.4, 0.4, 0.2),
        update_s=True,
        update_xi_flag=True,
        xi_grid_size=1000,
        update_structure=True,
    ):
        self.X = np.ascontiguousarray(X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be a 2-D array")
        self.n, self.p = self.X.shape
        self.components = list(components)
        self.num_trees = int(num_trees)
        self.prior_params = prior_params or TreePriorParams()
        self.split_probs = split_probs or SplitProbabilities.uniform(self.p)
        self.rng = rng or np.random.default_rng()
        self.move_probs = tuple(move_probs)
        self.update_s = update_s
        self.update_xi_flag = update_xi_flag
        self.xi_grid_size = xi_grid_size
        self.update_structure = update_structure
        self.iteration = 0
        self.proposed = {"grow": 0, "prune": 0, "change": 0}
        self.accepted = {"grow": 0, "prune": 0, "change": 0}

        self.trees = [Tree.single_leaf(self.p) for _ in range(self.num_trees)]
        self.assign = np.zeros((self.n, self.num_trees), dtype=np.int32)
        for comp in self.components:
            comp.init_state(self.rng)
            comp.values = {
                tb: [np.zeros(t.capacity) for t in self.trees] for tb in comp.tables
            }
            nr = comp.rows.size
            comp.contrib = {
                tb: np.zeros((nr, self.num_trees)) for tb in comp.tables
            }
            comp.full = {tb: np.zeros(nr) for tb in comp.tables}

    # -- integrated likelihood -------------------------------------------

    def tree_integrated_loglik(self, tree, assign_col, payloads, strict=False):
        """log Lambda(T_t): tree prior plus all per-leaf, per-component marginals.

        Returns (loglik, per-component stats) so an accepted proposal can
        reuse the stats for the leaf-value redraw.
        """
        total = tree_log_prior(tree, self.prior_params, self.split_probs, strict=strict)
        if not np.isfinite(total):
            return -np.inf, None
        pos = tree.leaf_positions()
        n_leaves = tree.n_leaves()
        stats_all = []
        for comp, payload in zip(self.components, payloads):
            cidx = pos[assign_col[comp.rows]]
            stats = comp.stats(payload, cidx, n_leaves)
            stats_all.append(stats)
            total += float(np.sum(comp.log_marginal(stats)))
        return float(total), stats_all

    # -- assignment maintenance -------------------------------------------

    def _proposed_assignment(self, t, prop):
        """Leaf assignment under the proposal, recomputed only where needed."""
        old = self.assign[:, t]
        new = old.copy()
        tree_new = prop.tree
        if prop.kind == "grow":
            target = prop.target
            rows = np.flatnonzero(old == target)
            if rows.size:
                axis = int(tree_new.feature[target])
                cut = float(tree_new.threshold[target])
                lc, rc = prop.grown_children
                go_left = self.X[rows, axis] <= cut
                new[rows] = np.where(go_left, lc, rc)
        elif prop.kind == "prune":
            old_tree = self.trees[t]
            lc = int(old_tree.left[prop.target])
            rc = int(old_tree.right[prop.target])
            rows = np.flatnonzero((old == lc) | (old == rc))
            new[rows] = prop.target
        else:
            old_tree = self.trees[t]
            sub_leaves = [
                s for s in old_tree.subtree_slots(prop.target) if old_tree.is_leaf(s)
            ]
            rows = np.flatnonzero(np.isin(old, sub_leaves))
            if rows.size:
                new[rows] = tree_new.traverse(self.X, rows=rows, start=prop.target)
        return new

    # -- MH tree update ------------------------------------------------------

    def mh_tree_update(self, t: int) -> bool:
        """One integrated-likelihood MH update of tree t plus leaf redraw."""
        rng = self.rng
        tree = self.trees[t]
        partials_by_comp = []
        payloads = []
        for comp in self.components:
            partials = {tb: comp.full[tb] - comp.contrib[tb][:, t] for tb in comp.tables}
            partials_by_comp.append(partials)
            payloads.append(comp.payload(partials))

        cur_ll, cur_stats = self.tree_integrated_loglik(
            tree, self.assign[:, t], payloads, strict=True
        )
        accepted = False
        new_assign = None
        new_stats = None
        prop = None
        if self.update_structure:
            prop = propose_move(
                tree, self.prior_params, self.split_probs, rng, self.move_probs
            )
            self.proposed[prop.kind] += 1
        if prop is not None and prop.valid:
            new_assign = self._proposed_assignment(t, prop)
            new_ll, new_stats = self.tree_integrated_loglik(
                prop.tree, new_assign, payloads
            )
            log_acc = new_ll - cur_ll + prop.log_ratio
            if np.log(rng.uniform()) < log_acc:
                accepted = True
                self.accepted[prop.kind] += 1
                self.trees[t] = prop.tree
                self.assign[:, t] = new_assign

        tree = self.trees[t]
        stats_all = new_stats if accepted else cur_stats
        leaf_slots = tree.leaves()
        for comp, partials, stats in zip(self.components, partials_by_comp, stats_all):
            drawn = comp.draw_leaf_values(stats, rng)
            sub_assign = self.assign[comp.rows, t]
            pos = tree.leaf_positions()
            cidx = pos[sub_assign]
            for tb in comp.tables:
                arr = np.zeros(tree.capacity)
                arr[leaf_slots] = drawn[tb]
                comp.values[tb][t] = arr
                col = drawn[tb][cidx]
                comp.contrib[tb][:, t] = col
                comp.full[tb] = partials[tb] + col
        return accepted

    # -- sweep -----------------------------------------------------------------

    def gibbs_sweep(self):
        """One full sweep in the documented scan order; returns self."""
        for t in range(self.num_trees):
            self.mh_tree_update(t)
        for comp in self.components:
            comp.update_globals(comp.full, self.rng)
        if self.update_s:
            counts = axis_usage_counts(self.trees, self.p)
            s = update_split_probabilities(counts, self.split_probs.xi, self.rng)
            self.split_probs = SplitProbabilities(s, self.split_probs.xi)
            if self.update_xi_flag:
                xi = update_xi(self.split_probs, self.rng, self.xi_grid_size)
                self.split_probs = SplitProbabilities(self.split_probs.s, xi)
        for comp in self.components:
            if isinstance(comp, ProbitComponent):
                comp.sample_latent(comp.full, self.rng)
        self.resync_caches()
        self.iteration += 1
        return self

    def resync_caches(self):
        """Recompute full fits from contributions (kills incremental drift)."""
        for comp in self.components:
            for tb in comp.tables:
                comp.full[tb] = comp.contrib[tb].sum(axis=1)
                if not np.all(np.isfinite(comp.full[tb])):
                    raise NumericError(f"non-finite fit in component table {tb!r}")

    def cache_drift(self) -> float:
        """Max |incremental - recomputed| over all component fits."""
        worst = 0.0
        for comp in self.components:
            for tb in comp.tables:
                fresh = comp.contrib[tb].sum(axis=1)
                if fresh.size:
                    worst = max(worst, float(np.max(np.abs(fresh - comp.full[tb]))))
        return worst

    # -- evaluation and snapshots ------------------------------------------

    def evaluate_component(self, table: str, X) -> np.ndarray:
        """Current-state sum-of-trees fit for a component table at X."""
        for comp in self.components:
            if table in comp.tables:
                return evaluate_forest(self.trees, comp.values[table], np.asarray(X))
        raise KeyError(f"no component table {table!r}")

    def globals_dict(self) -> dict:
        out = {"xi": self.split_probs.xi}
        for comp in self.components:
            out.update(comp.globals_dict())
        return out

    def snapshot(self, chain: int = 0) -> Snapshot:
        values = []
        for t in range(self.num_trees):
            per_tree = {}
            for comp in self.components:
                for tb in comp.tables:
                    per_tree[tb] = comp.values[tb][t].copy()
            values.append(per_tree)
        return Snapshot(
            iteration=self.iteration,
            chain=chain,
            trees=[t.copy() for t in self.trees],
            values=values,
            globals_=self.globals_dict(),
            split_probs=self.split_probs.s.copy(),
        )

    def set_forest_state(self, trees, values) -> None:
        """Adopt a forest (trees plus per-tree leaf-value tables).

        ``values`` is a list over trees of {table: capacity-sized array}
        as produced by ``snapshot()``.  Assignments, contributions and
        full fits are rebuilt from scratch.
        """
        if len(trees) != self.num_trees:
            raise ValueError("tree count mismatch")
        self.trees = [t.copy() for t in trees]
        for t, tree in enumerate(self.trees):
            self.assign[:, t] = tree.traverse(self.X)
        for comp in self.components:
            for tb in comp.tables:
                for t, tree in enumerate(self.trees):
                    arr = np.asarray(values[t][tb], dtype=float).copy()
                    comp.values[tb][t] = arr
                    comp.contrib[tb][:, t] = arr[self.assign[comp.rows, t]]
        self.resync_caches()

    def acceptance_rates(self) -> dict:
        return {
            kind: (self.accepted[kind] / self.proposed[kind] if self.proposed[kind] else 0.0)
            for kind in self.proposed
        }


def probit_probability(theta0, h_theta):
    """Success probability Phi(theta0 + h_theta(x))."""
    return ndtr(theta0 + np.asarray(h_theta))
