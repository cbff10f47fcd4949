"""Branching-process tree prior and Metropolis-Hastings structural moves.

The prior over tree structures: a node at depth d becomes a branch with
probability q(d) = gamma * (1 + d)^(-zeta), otherwise a leaf.  Branch
axes are drawn i.i.d. from the splitting proportions s (which carry a
sparsity-inducing Dirichlet(xi/P, ..., xi/P) prior), and the cutpoint is
Uniform(L_j, U_j) over the axis interval of the cell the branch lives
in.  zeta > 0 guarantees termination of the branching process; zeta = 0
is the plain Galton-Watson case.

Structural proposals are grow / prune / change with configurable mix
(default 0.4 / 0.4 / 0.2).  Each proposal carries the exact log
proposal-density ratio log q(T | T') - log q(T' | T) so that together
with the integrated likelihood the acceptance probability is exact.
A change move may invalidate descendant cutpoints; such proposals are
marked invalid and always rejected, which keeps the chain on the
valid-tree space without breaking detailed balance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import InvalidTreeError
from .trees import Tree

__all__ = [
    "TreePriorParams",
    "SplitProbabilities",
    "MoveProposal",
    "branch_probability",
    "tree_log_prior",
    "sample_tree_from_prior",
    "propose_move",
    "update_split_probabilities",
    "update_xi",
    "axis_usage_counts",
]

# Axis intervals narrower than this are treated as unsplittable.
_MIN_WIDTH = 1e-12


@dataclass
class TreePriorParams:
    """Parameters of the branching-process prior q(d) = gamma*(1+d)^(-zeta)."""

    gamma: float = 0.95
    zeta: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0,1), got {self.gamma}")
        if self.zeta < 0.0:
            raise ValueError(f"zeta must be >= 0, got {self.zeta}")


@dataclass
class SplitProbabilities:
    """Splitting proportions s on the P-simplex plus Dirichlet concentration xi."""

    s: np.ndarray
    xi: float = 1.0

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        if np.any(self.s < 0) or abs(self.s.sum() - 1.0) > 1e-8:
            raise ValueError("s must be a probability vector")
        if self.xi <= 0:
            raise ValueError("xi must be positive")

    @classmethod
    def uniform(cls, n_axes: int, xi: float | None = None) -> "SplitProbabilities":
        return cls(np.full(n_axes, 1.0 / n_axes), float(n_axes) if xi is None else xi)


@dataclass
class MoveProposal:
    """One grow/prune/change proposal plus its exact proposal-density ratio.

    ``log_ratio`` is log q(T | T') - log q(T' | T); adding it to the
    difference of integrated log likelihoods gives the MH log-acceptance.
    ``valid`` is False when the proposal leaves the valid-tree space
    (degenerate or violated descendant rule); such moves are rejected.
    """

    kind: str
    tree: Tree
    target: int
    log_ratio: float
    valid: bool = True
    grown_children: tuple[int, int] | None = None


def branch_probability(depth: int, params: TreePriorParams) -> float:
    """Probability q(d) that a node at this depth splits into two children."""
    return params.gamma * (1.0 + depth) ** (-params.zeta)


def _available_axes(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return np.flatnonzero(upper - lower > _MIN_WIDTH)


def tree_log_prior(
    tree: Tree,
    params: TreePriorParams,
    split_probs: SplitProbabilities,
    strict: bool = True,
) -> float:
    """Log prior mass/density of a tree structure including its rules.

    Sums log q(depth) + log s_axis - log(U_axis - L_axis) over branches
    and log(1 - q(depth)) over leaves.  With ``strict`` a degenerate
    interval or out-of-bounds cutpoint raises InvalidTreeError; otherwise
    the function returns -inf (used when scoring MH proposals).
    """
    s = split_probs.s
    total = 0.0
    stack = [(0, np.zeros(tree.n_axes), np.ones(tree.n_axes))]
    while stack:
        slot, lower, upper = stack.pop()
        d = int(tree.depth[slot])
        q = branch_probability(d, params)
        f = int(tree.feature[slot])
        if f == -1:
            total += np.log1p(-q)
            continue
        cut = float(tree.threshold[slot])
        width = upper[f] - lower[f]
        if width <= _MIN_WIDTH or not lower[f] < cut < upper[f]:
            if strict:
                raise InvalidTreeError(
                    f"degenerate or violated rule at slot {slot} "
                    f"(axis {f}, cut {cut}, interval ({lower[f]}, {upper[f]}))"
                )
            return -np.inf
        total += np.log(q) + np.log(s[f]) - np.log(width)
        ul = upper.copy()
        ul[f] = cut
        ll = lower.copy()
        ll[f] = cut
        stack.append((int(tree.left[slot]), lower, ul))
        stack.append((int(tree.right[slot]), ll, upper))
    return float(total)


def sample_tree_from_prior(
    n_axes: int,
    params: TreePriorParams,
    split_probs: SplitProbabilities,
    rng: np.random.Generator,
) -> Tree:
    """Draw a tree by running the branching process from the root.

    Each node at depth d branches with probability q(d); branch axes are
    drawn from s restricted to axes whose interval is non-degenerate
    (a node with no splittable axis becomes a leaf).
    """
    tree = Tree(n_axes)
    s = split_probs.s
    stack = [(0, np.zeros(n_axes), np.ones(n_axes))]
    while stack:
        slot, lower, upper = stack.pop()
        d = int(tree.depth[slot])
        if rng.random() >= branch_probability(d, params):
            continue
        avail = _available_axes(lower, upper)
        if avail.size == 0:
            continue
        probs = s[avail]
        if probs.sum() <= 0:
            continue
        axis = int(avail[_categorical(probs, rng)])
        cut = rng.uniform(lower[axis], upper[axis])
        lc, rc = tree.grow(slot, axis, cut)
        ul = upper.copy()
        ul[axis] = cut
        ll = lower.copy()
        ll[axis] = cut
        stack.append((lc, lower, ul))
        stack.append((rc, ll, upper))
    return tree


def _axis_log_density(
    s: np.ndarray, lower: np.ndarray, upper: np.ndarray, axis: int
) -> float:
    """Log density of drawing (axis, cutpoint) in the grow/change proposal."""
    avail = _available_axes(lower, upper)
    probs = s[avail]
    tot = probs.sum()
    width = upper[axis] - lower[axis]
    return float(np.log(s[axis] / tot) - np.log(width))


def _categorical(weights: np.ndarray, rng: np.random.Generator) -> int:
    """Index draw proportional to nonnegative weights (cumsum inversion)."""
    cum = np.cumsum(weights)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


def _draw_rule(
    s: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    rng: np.random.Generator,
) -> tuple[int, float, float] | None:
    """Draw (axis, cut, log proposal density); None when nothing is splittable."""
    avail = _available_axes(lower, upper)
    if avail.size == 0:
        return None
    probs = s[avail]
    tot = probs.sum()
    if tot <= 0:
        return None
    axis = int(avail[_categorical(probs, rng)])
    cut = float(rng.uniform(lower[axis], upper[axis]))
    logq = float(np.log(s[axis] / tot) - np.log(upper[axis] - lower[axis]))
    return axis, cut, logq


def _move_probs(tree: Tree, mix: tuple[float, float, float]) -> dict[str, float]:
    if tree.n_branches() == 0:
        return {"grow": 1.0}
    return {"grow": mix[0], "prune": mix[1], "change": mix[2]}


def _subtree_valid(tree: Tree, slot: int) -> bool:
    """Check every rule in the subtree at ``slot`` against its cell bounds."""
    lo, up = tree.bounds(slot)
    stack = [(int(slot), lo, up)]
    while stack:
        node, lower, upper = stack.pop()
        f = int(tree.feature[node])
        if f < 0:
            continue
        cut = float(tree.threshold[node])
        if upper[f] - lower[f] <= _MIN_WIDTH or not lower[f] < cut < upper[f]:
            return False
        ul = upper.copy()
        ul[f] = cut
        ll = lower.copy()
        ll[f] = cut
        stack.append((int(tree.left[node]), lower, ul))
        stack.append((int(tree.right[node]), ll, upper))
    return True


def propose_move(
    tree: Tree,
    params: TreePriorParams,
    split_probs: SplitProbabilities,
    rng: np.random.Generator,
    mix: tuple[float, float, float] = (0.4, 0.4, 0.2),
) -> MoveProposal:
    """Draw one structural proposal and its exact proposal-density ratio.

    Grow picks a leaf uniformly and draws a rule from the restricted
    splitting proportions; prune picks a nog branch uniformly; change
    redraws the rule of a uniformly chosen branch.  A single-leaf tree
    always grows.  The returned ``log_ratio`` accounts for the reverse
    move's selection probabilities, so prior-targeting MH with a unit
    likelihood leaves the tree prior invariant.
    """
    s = split_probs.s
    fwd_probs = _move_probs(tree, mix)
    kinds = sorted(fwd_probs)
    weights = np.array([fwd_probs[k] for k in kinds])
    kind = kinds[int(rng.choice(len(kinds), p=weights / weights.sum()))]

    if kind == "grow":
        leaves = tree.leaves()
        target = int(leaves[rng.integers(leaves.size)])
        lower, upper = tree.bounds(target)
        rule = _draw_rule(s, lower, upper, rng)
        if rule is None:
            return MoveProposal("grow", tree, target, -np.inf, valid=False)
        axis, cut, log_rule = rule
        new = tree.copy()
        children = new.grow(target, axis, cut)
        log_fwd = np.log(fwd_probs["grow"]) - np.log(leaves.size) + log_rule
        rev_probs = _move_probs(new, mix)
        log_rev = np.log(rev_probs["prune"]) - np.log(new.nogs().size)
        return MoveProposal(
            "grow", new, target, float(log_rev - log_fwd), grown_children=children
        )

    if kind == "prune":
        nogs = tree.nogs()
        target = int(nogs[rng.integers(nogs.size)])
        axis = int(tree.feature[target])
        cut = float(tree.threshold[target])
        lower, upper = tree.bounds(target)
        new = tree.copy()
        new.prune(target)
        log_fwd = np.log(fwd_probs["prune"]) - np.log(nogs.size)
        rev_probs = _move_probs(new, mix)
        log_rev = (
            np.log(rev_probs["grow"])
            - np.log(new.n_leaves())
            + _axis_log_density(s, lower, upper, axis)
        )
        return MoveProposal("prune", new, target, float(log_rev - log_fwd))

    branches = tree.branches()
    target = int(branches[rng.integers(branches.size)])
    old_axis = int(tree.feature[target])
    lower, upper = tree.bounds(target)
    rule = _draw_rule(s, lower, upper, rng)
    if rule is None:
        return MoveProposal("change", tree, target, -np.inf, valid=False)
    axis, cut, log_rule = rule
    new = tree.copy()
    new.set_rule(target, axis, cut)
    # Branch count is unchanged, so the node-selection terms cancel.
    log_rev = _axis_log_density(s, lower, upper, old_axis)
    valid = _subtree_valid(new, target)
    return MoveProposal("change", new, target, float(log_rev - log_rule), valid=valid)


def update_split_probabilities(
    counts: np.ndarray, xi: float, rng: np.random.Generator
) -> np.ndarray:
    """Conjugate Dirichlet draw of s given per-axis branch counts.

    s ~ Dirichlet(xi/P + c_1, ..., xi/P + c_P).
    """
    counts = np.asarray(counts, dtype=float)
    p = counts.size
    s = rng.dirichlet(xi / p + counts)
    # Sparse concentrations underflow components to exact 0; floor them so
    # log s stays finite (1e-300 is far below the "effectively eliminated"
    # scale and statistically indistinguishable from 0).
    s = np.maximum(s, 1e-300)
    return s / s.sum()


def update_xi(
    split_probs: SplitProbabilities,
    rng: np.random.Generator,
    grid_size: int = 1000,
) -> float:
    """Gibbs update of the Dirichlet concentration xi on a fixed grid.

    The prior is xi/(xi+P) ~ Beta(0.5, 1).  The update discretizes
    u = xi/(xi+P) on a midpoint grid over (0,1), weights each grid value
    by prior density times the Dirichlet(xi/P, ..., xi/P) density at the
    current s, and draws from the normalized grid distribution.
    """
    s = np.maximum(split_probs.s, 1e-300)
    p = s.size
    u = (np.arange(grid_size) + 0.5) / grid_size
    xi = p * u / (1.0 - u)
    a = xi / p
    log_prior = -0.5 * np.log(u)
    sum_log_s = float(np.sum(np.log(s)))
    log_lik = gammaln(xi) - p * gammaln(a) + (a - 1.0) * sum_log_s
    logw = log_prior + log_lik
    w = np.exp(logw - logsumexp(logw))
    w /= w.sum()
    idx = int(rng.choice(grid_size, p=w))
    return float(xi[idx])


def axis_usage_counts(trees, n_axes: int) -> np.ndarray:
    """Number of branch rules splitting on each axis across a forest."""
    counts = np.zeros(n_axes, dtype=np.int64)
    for tree in trees:
        b = tree.branches()
        if b.size:
            counts += np.bincount(tree.feature[b], minlength=n_axes)
    return counts
