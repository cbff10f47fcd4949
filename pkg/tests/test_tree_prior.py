"""Branching-process prior, Dirichlet splitting proportions, and MH moves."""

import numpy as np
import pytest

from sharedforest.errors import InvalidTreeError
from sharedforest.tree_prior import (
    MoveProposal,
    SplitProbabilities,
    TreePriorParams,
    branch_probability,
    propose_move,
    sample_tree_from_prior,
    tree_log_prior,
    update_split_probabilities,
    update_xi,
)
from sharedforest.trees import Tree

from oracles import branching_process_sizes, chi2_two_sample, tree_log_prior_recursive


class TestBranchProbability:
    def test_root_default(self):
        assert branch_probability(0, TreePriorParams(0.95, 2.0)) == 0.95

    def test_depth_one_default(self):
        assert branch_probability(1, TreePriorParams(0.95, 2.0)) == pytest.approx(
            0.2375
        )

    def test_zeta_zero_is_galton_watson(self):
        params = TreePriorParams(0.7, 0.0)
        for d in (0, 1, 5, 20):
            assert branch_probability(d, params) == 0.7


class TestTreeLogPrior:
    def test_single_leaf(self):
        t = Tree(2)
        params = TreePriorParams(0.95, 2.0)
        sp = SplitProbabilities.uniform(2)
        assert tree_log_prior(t, params, sp) == pytest.approx(np.log(0.05))

    def test_root_split_only_uniform_cut_density_vanishes(self):
        """P=1, s=(1): cut density on (0,1) contributes log 1 = 0."""
        t = Tree(1)
        t.grow(0, 0, 0.37)
        params = TreePriorParams(0.95, 2.0)
        sp = SplitProbabilities(np.array([1.0]))
        q1 = branch_probability(1, params)
        want = np.log(0.95) + 2 * np.log(1 - q1)
        assert tree_log_prior(t, params, sp) == pytest.approx(want, rel=1e-12)

    def test_matches_recursive_oracle(self):
        rng = np.random.default_rng(17)
        params = TreePriorParams(0.95, 1.2)
        s = np.array([0.5, 0.3, 0.2])
        sp = SplitProbabilities(s)
        for _ in range(25):
            tree = sample_tree_from_prior(3, params, sp, rng)
            got = tree_log_prior(tree, params, sp)
            want = tree_log_prior_recursive(tree, params.gamma, params.zeta, s)
            assert got == pytest.approx(want, rel=1e-12)
            assert np.isfinite(got)

    def test_degenerate_rule_raises(self):
        t = Tree(1)
        lc, _ = t.grow(0, 0, 0.5)
        t.grow(lc, 0, 0.8)  # violates (0, 0.5]
        with pytest.raises(InvalidTreeError):
            tree_log_prior(t, TreePriorParams(), SplitProbabilities.uniform(1))
        val = tree_log_prior(
            t, TreePriorParams(), SplitProbabilities.uniform(1), strict=False
        )
        assert val == -np.inf


class TestSampleTreeFromPrior:
    def test_tiny_gamma_gives_single_leaf(self):
        rng = np.random.default_rng(0)
        params = TreePriorParams(gamma=1e-12, zeta=2.0)
        sp = SplitProbabilities.uniform(2)
        for _ in range(50):
            t = sample_tree_from_prior(2, params, sp, rng)
            assert t.n_leaves() == 1

    def test_root_leaf_fraction(self):
        """Fraction of depth-0 trees is 1 - gamma = 0.05 within 3 MC SE."""
        rng = np.random.default_rng(123)
        params = TreePriorParams(0.95, 2.0)
        sp = SplitProbabilities.uniform(2)
        n = 10**5
        single = sum(
            sample_tree_from_prior(2, params, sp, rng).n_leaves() == 1
            for _ in range(n)
        )
        se = np.sqrt(0.05 * 0.95 / n)
        assert abs(single / n - 0.05) < 3 * se

    def test_size_distribution_matches_independent_simulator(self):
        """Chi-square on the leaf-count histogram vs a direct simulation."""
        rng = np.random.default_rng(42)
        params = TreePriorParams(0.95, 2.0)
        sp = SplitProbabilities.uniform(3)
        n = 10**5
        sizes = np.array(
            [sample_tree_from_prior(3, params, sp, rng).n_leaves() for _ in range(n)]
        )
        oracle = branching_process_sizes(0.95, 2.0, n, np.random.default_rng(43))
        hi = int(max(sizes.max(), oracle.max()))
        a = np.bincount(sizes, minlength=hi + 1)
        b = np.bincount(oracle, minlength=hi + 1)
        _, _, p = chi2_two_sample(a, b)
        assert p > 0.001

    def test_draw_has_finite_prior(self):
        rng = np.random.default_rng(8)
        params = TreePriorParams(0.95, 2.0)
        sp = SplitProbabilities(np.array([0.7, 0.2, 0.1]))
        for _ in range(50):
            t = sample_tree_from_prior(3, params, sp, rng)
            t.validate()
            assert np.isfinite(tree_log_prior(t, params, sp))


class TestProposeMove:
    def test_single_leaf_always_grows(self):
        rng = np.random.default_rng(1)
        params = TreePriorParams()
        sp = SplitProbabilities.uniform(2)
        t = Tree(2)
        for _ in range(20):
            prop = propose_move(t, params, sp, rng)
            assert prop.kind == "grow"

    def test_grow_then_prune_ratios_cancel(self):
        """The grow ratio and the ratio of pruning it back are inverses."""
        rng = np.random.default_rng(5)
        params = TreePriorParams()
        sp = SplitProbabilities.uniform(3)
        t = Tree(3)
        grow = None
        while grow is None or grow.kind != "grow":
            grow = propose_move(t, params, sp, rng)
        # Reverse by hand: prune the node that was just grown.
        t2 = grow.tree
        rng2 = np.random.default_rng(99)
        prune = None
        for _ in range(500):
            cand = propose_move(t2, params, sp, rng2)
            if cand.kind == "prune" and cand.target == grow.target:
                prune = cand
                break
        assert prune is not None
        assert grow.log_ratio + prune.log_ratio == pytest.approx(0.0, abs=1e-12)

    def test_reverse_restores_tree_bit_exactly(self):
        """Applying a move then its reverse restores the original tree.

        Compared slot by slot over the live nodes (the arena may have
        been enlarged by the move, which does not change the tree).
        """
        rng = np.random.default_rng(31)
        params = TreePriorParams(0.95, 1.0)
        sp = SplitProbabilities.uniform(2)

        def canonical(t):
            live = np.flatnonzero(t.feature != -2)
            return (
                live.tolist(),
                t.feature[live].tolist(),
                t.threshold[live].tolist(),
                t.left[live].tolist(),
                t.right[live].tolist(),
                t.parent[live].tolist(),
                t.depth[live].tolist(),
            )

        for _ in range(200):
            tree = sample_tree_from_prior(2, params, sp, rng)
            prop = propose_move(tree, params, sp, rng)
            if not prop.valid:
                continue
            restored = prop.tree.copy()
            if prop.kind == "grow":
                restored.prune(prop.target)
            elif prop.kind == "prune":
                ax = int(tree.feature[prop.target])
                cut = float(tree.threshold[prop.target])
                restored.grow(prop.target, ax, cut)
            else:
                ax = int(tree.feature[prop.target])
                cut = float(tree.threshold[prop.target])
                restored.set_rule(prop.target, ax, cut)
            a, b = canonical(restored), canonical(tree)
            assert a[0] == b[0]
            assert a[1] == b[1]
            assert a[3:] == b[3:]
            for x, y in zip(a[2], b[2]):
                assert (x == y) or (np.isnan(x) and np.isnan(y))

    def test_prior_mh_preserves_prior(self):
        """5000-iteration smoke version of the prior-invariance check.

        The acceptance suite runs the full 10^5-sweep test; this guards
        the bookkeeping during development.
        """
        rng = np.random.default_rng(77)
        params = TreePriorParams(0.95, 2.0)
        sp = SplitProbabilities(np.array([0.6, 0.3, 0.1]))
        tree = Tree(3)
        sizes = []
        for it in range(5000):
            prop = propose_move(tree, params, sp, rng)
            if prop.valid:
                cur = tree_log_prior(tree, params, sp)
                new = tree_log_prior(prop.tree, params, sp, strict=False)
                if np.log(rng.uniform()) < new - cur + prop.log_ratio:
                    tree = prop.tree
            if it >= 1000 and it % 20 == 0:
                sizes.append(tree.n_leaves())
        sizes = np.array(sizes)
        direct = np.array(
            [
                sample_tree_from_prior(3, params, sp, rng).n_leaves()
                for _ in range(sizes.size)
            ]
        )
        hi = int(max(sizes.max(), direct.max()))
        _, _, p = chi2_two_sample(
            np.bincount(sizes, minlength=hi + 1), np.bincount(direct, minlength=hi + 1)
        )
        assert p > 0.001


class TestSplitProbabilityUpdates:
    def test_zero_counts_is_prior_draw(self):
        rng = np.random.default_rng(3)
        draws = np.array(
            [update_split_probabilities(np.zeros(4), 2.0, rng) for _ in range(20000)]
        )
        # Dirichlet(0.5, ..., 0.5): mean 1/4.
        np.testing.assert_allclose(draws.mean(axis=0), 0.25, atol=0.01)

    def test_posterior_mean_concrete(self):
        """P=2, counts (10, 0), xi=2: E[s_1] = 11/12."""
        rng = np.random.default_rng(4)
        draws = np.array(
            [
                update_split_probabilities(np.array([10.0, 0.0]), 2.0, rng)[0]
                for _ in range(10**5)
            ]
        )
        a, b = 11.0, 1.0
        want = a / (a + b)
        se = np.sqrt(a * b / ((a + b) ** 2 * (a + b + 1)) / draws.size)
        assert abs(draws.mean() - want) < 3 * se

    def test_moments_match_analytic(self):
        """Sampler mean and variance match Dirichlet moments to 3 MC SE."""
        rng = np.random.default_rng(9)
        counts = np.array([3.0, 7.0, 0.0])
        xi = 1.5
        alpha = xi / 3 + counts
        a0 = alpha.sum()
        draws = np.array(
            [update_split_probabilities(counts, xi, rng) for _ in range(10**5)]
        )
        mean = alpha / a0
        var = alpha * (a0 - alpha) / (a0**2 * (a0 + 1))
        se = np.sqrt(var / draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - mean) < 3 * se)


class TestXiUpdate:
    def test_p1_posterior_equals_prior(self):
        """With P=1 the likelihood is flat, so u = xi/(xi+1) ~ Beta(0.5, 1)."""
        rng = np.random.default_rng(10)
        sp = SplitProbabilities(np.array([1.0]), xi=1.0)
        us = np.array(
            [(lambda x: x / (x + 1.0))(update_xi(sp, rng)) for _ in range(20000)]
        )
        # Beta(0.5, 1) has mean 1/3 and E[u^2] = 1/5.
        se1 = np.sqrt(np.var(us) / us.size)
        assert abs(us.mean() - 1.0 / 3.0) < 4 * se1
        se2 = np.sqrt(np.var(us**2) / us.size)
        assert abs((us**2).mean() - 0.2) < 4 * se2

    def test_concentrated_s_pulls_xi_down(self):
        """Nearly one-hot s favors small xi relative to the prior."""
        rng = np.random.default_rng(11)
        p = 10
        s = np.full(p, 0.01 / 9)
        s[0] = 0.99
        sp = SplitProbabilities(s, xi=float(p))
        post = np.array([update_xi(sp, rng) for _ in range(4000)])
        prior_us = rng.beta(0.5, 1.0, size=4000)
        prior_xi = p * prior_us / (1 - prior_us)
        assert np.median(post) < np.median(prior_xi)

    def test_grid_mean_matches_fine_quadrature(self):
        """Posterior mean of xi from the 1000-point grid vs a 10^5 grid."""
        from scipy.special import gammaln, logsumexp

        p = 5
        s = np.array([0.5, 0.2, 0.15, 0.1, 0.05])

        def posterior_mean(grid_size):
            u = (np.arange(grid_size) + 0.5) / grid_size
            xi = p * u / (1 - u)
            a = xi / p
            logw = (
                -0.5 * np.log(u)
                + gammaln(xi)
                - p * gammaln(a)
                + (a - 1) * np.sum(np.log(s))
            )
            w = np.exp(logw - logsumexp(logw))
            w /= w.sum()
            return float(np.sum(w * xi))

        coarse = posterior_mean(1000)
        fine = posterior_mean(10**5)
        assert abs(coarse - fine) / fine < 0.01

    def test_grid_draws_follow_grid_posterior(self):
        """Draws from update_xi reproduce the analytic grid distribution."""
        rng = np.random.default_rng(12)
        p = 4
        s = np.array([0.6, 0.25, 0.1, 0.05])
        sp = SplitProbabilities(s, xi=2.0)
        draws = np.array([update_xi(sp, rng) for _ in range(20000)])
        med = np.median(draws)
        lo = np.quantile(draws, 0.25)
        # Recompute the exact grid distribution and compare quantiles.
        from scipy.special import gammaln, logsumexp

        u = (np.arange(1000) + 0.5) / 1000
        xi = p * u / (1 - u)
        a = xi / p
        logw = (
            -0.5 * np.log(u) + gammaln(xi) - p * gammaln(a) + (a - 1) * np.sum(np.log(s))
        )
        w = np.exp(logw - logsumexp(logw))
        w /= w.sum()
        cdf = np.cumsum(w)
        exact_med = xi[np.searchsorted(cdf, 0.5)]
        exact_lo = xi[np.searchsorted(cdf, 0.25)]
        assert med == pytest.approx(exact_med, rel=0.1)
        assert lo == pytest.approx(exact_lo, rel=0.1)
