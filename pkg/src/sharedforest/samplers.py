"""Low-level samplers: one-sided truncated normals and univariate slice.

The truncated-normal sampler is what the latent-variable augmentation
step leans on; it must stay exact far into the tails, where a naive
inverse-cdf loses all precision.  Standardized tail location a <= 5 uses
the inverse survival function on a rescaled uniform; beyond that the
exponential-proposal rejection sampler of the translated-exponential
family takes over (acceptance > 0.96 there, so the loop is short).
"""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

__all__ = ["truncnorm_tail_standard", "sample_truncated_normal", "slice_sample"]

# Above this standardized truncation point the inverse-cdf path is
# replaced by exponential-proposal rejection.
_TAIL_SWITCH = 5.0


def truncnorm_tail_standard(a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw X ~ N(0,1) conditional on X > a, elementwise over ``a``."""
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    easy = a <= _TAIL_SWITCH
    if easy.any():
        ae = a[easy]
        u = rng.uniform(size=ae.shape)
        # Survival-scale inversion: S(X) uniform on (0, S(a)).
        out[easy] = norm.isf(u * norm.sf(ae))
    hard = ~easy
    if hard.any():
        ah = a[hard]
        draws = np.empty_like(ah)
        pending = np.ones(ah.shape, dtype=bool)
        lam = 0.5 * (ah + np.sqrt(ah * ah + 4.0))
        while pending.any():
            m = np.flatnonzero(pending)
            prop = ah[m] + rng.exponential(size=m.size) / lam[m]
            acc = rng.uniform(size=m.size) <= np.exp(-0.5 * (prop - lam[m]) ** 2)
            take = m[acc]
            draws[take] = prop[acc]
            pending[take] = False
        out[hard] = draws
    return out


def sample_truncated_normal(
    mean: np.ndarray, positive: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw Z_i ~ N(mean_i, 1) truncated to (0, inf) or (-inf, 0).

    ``positive`` selects the (0, inf) side per element.  Draws on the
    negative side are obtained by sign-flipping a positive-side draw of
    the mirrored mean, so both sides share the same tail-robust path.
    """
    mean = np.asarray(mean, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    signed_mean = np.where(positive, mean, -mean)
    # Z > 0 with Z ~ N(m,1)  <=>  Z = m + X, X ~ N(0,1) | X > -m.
    x = truncnorm_tail_standard(-signed_mean, rng)
    z = signed_mean + x
    return np.where(positive, z, -z)


def slice_sample(
    x0: float,
    log_density,
    rng: np.random.Generator,
    width: float = 1.0,
    max_steps: int = 64,
) -> float:
    """One update of a univariate slice sampler with stepping out.

    Standard stepping-out/shrinkage slice sampling; derivative-free and
    tuning-free, which is what the heavy-tailed half-Cauchy conditionals
    need.  ``log_density`` may return -inf outside the support.
    """
    logf0 = log_density(x0)
    if not np.isfinite(logf0):
        raise ValueError("slice_sample started outside the support")
    logy = logf0 - rng.exponential()
    left = x0 - width * rng.uniform()
    right = left + width
    j = int(np.floor(max_steps * rng.uniform()))
    k = max_steps - 1 - j
    while j > 0 and log_density(left) > logy:
        left -= width
        j -= 1
    while k > 0 and log_density(right) > logy:
        right += width
        k -= 1
    while True:
        x1 = rng.uniform(left, right)
        if log_density(x1) > logy:
            return float(x1)
        if x1 < x0:
            left = x1
        else:
            right = x1
