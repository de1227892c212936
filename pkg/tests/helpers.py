"""Independent reference implementations used as test oracles.

Everything here is written the slow, obvious way (dense linear algebra,
explicit loops, brute-force enumeration) so the package can be checked
against arithmetic that shares none of its shortcuts.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.stats import multivariate_normal, rankdata


def se_kernel(xa, xb, lengthscale, signal_std):
    xa = np.asarray(xa, dtype=float)[:, None]
    xb = np.asarray(xb, dtype=float)[None, :]
    return signal_std**2 * np.exp(-((xa - xb) ** 2) / (2.0 * lengthscale**2))


def noisy_cov(times, hp):
    t = len(times)
    return se_kernel(times, times, hp.lengthscale, hp.signal_std) + hp.noise_std**2 * np.eye(t)


def fd_gradient(f, x0, h=1e-3):
    """Finite differences of f at x0, one value per coordinate.

    Fourth-order central stencil: truncation error O(h^4) keeps the
    oracle itself well below a 1e-5 comparison tolerance even where f
    is strongly curved (e.g. likelihoods at short lengthscales).
    """
    x0 = np.asarray(x0, dtype=float)
    grad = np.empty(x0.size)
    for k in range(x0.size):
        step = np.zeros(x0.size)
        step[k] = h
        grad[k] = (
            -f(x0 + 2 * step) + 8 * f(x0 + step) - 8 * f(x0 - step) + f(x0 - 2 * step)
        ) / (12 * h)
    return grad


def dense_lml(values, times, hp):
    """Log marginal likelihood through scipy's dense multivariate normal."""
    cov = noisy_cov(times, hp)
    mean = np.zeros(len(times))
    return float(multivariate_normal(mean=mean, cov=cov).logpdf(np.asarray(values, float)))


def joint_sync_oracle(ya, yb, times, hp):
    """GP similarity via the brute-force 2t x 2t joint Gaussian.

    Shared-curve hypothesis: [y_a; y_b] ~ N(0, [[K_y, K], [K, K_y]]).
    Independent hypothesis: the product of the two marginals.
    """
    t = len(times)
    K = se_kernel(times, times, hp.lengthscale, hp.signal_std)
    Ky = K + hp.noise_std**2 * np.eye(t)
    joint = np.block([[Ky, K], [K, Ky]])
    y = np.concatenate([np.asarray(ya, float), np.asarray(yb, float)])
    log_joint = multivariate_normal(mean=np.zeros(2 * t), cov=joint).logpdf(y)
    log_a = multivariate_normal(mean=np.zeros(t), cov=Ky).logpdf(ya)
    log_b = multivariate_normal(mean=np.zeros(t), cov=Ky).logpdf(yb)
    return float(log_joint - log_a - log_b)


def joint_async_oracle(course_a, course_b, hp):
    """Same construction on two arbitrary grids (blocks are rectangular)."""
    ta, tb = course_a.times, course_b.times
    Kaa = se_kernel(ta, ta, hp.lengthscale, hp.signal_std) + hp.noise_std**2 * np.eye(len(ta))
    Kbb = se_kernel(tb, tb, hp.lengthscale, hp.signal_std) + hp.noise_std**2 * np.eye(len(tb))
    Kab = se_kernel(ta, tb, hp.lengthscale, hp.signal_std)
    joint = np.block([[Kaa, Kab], [Kab.T, Kbb]])
    y = np.concatenate([course_a.values, course_b.values])
    log_joint = multivariate_normal(mean=np.zeros(len(y)), cov=joint).logpdf(y)
    log_a = multivariate_normal(mean=np.zeros(len(ta)), cov=Kaa).logpdf(course_a.values)
    log_b = multivariate_normal(mean=np.zeros(len(tb)), cov=Kbb).logpdf(course_b.values)
    return float(log_joint - log_a - log_b)


def posterior_predictive_oracle(ya, yb, times, hp):
    """s = log p(y_b | y_a) - log p(y_b), the prediction-improvement form."""
    t = len(times)
    K = se_kernel(times, times, hp.lengthscale, hp.signal_std)
    Ky = K + hp.noise_std**2 * np.eye(t)
    mean = K @ np.linalg.solve(Ky, np.asarray(ya, float))
    cond_cov = Ky - K @ np.linalg.solve(Ky, K)
    log_cond = multivariate_normal(mean=mean, cov=cond_cov, allow_singular=True).logpdf(yb)
    log_marg = multivariate_normal(mean=np.zeros(t), cov=Ky).logpdf(yb)
    return float(log_cond - log_marg)


def dtw_bruteforce(a, b):
    """Minimum-cost monotone alignment by exhaustive recursion.

    Local cost is the squared difference; the distance is the square
    root of the best path total, matching the package convention.
    """
    a = tuple(float(v) for v in a)
    b = tuple(float(v) for v in b)

    @lru_cache(maxsize=None)
    def best(i, j):
        cost = (a[i] - b[j]) ** 2
        if i == 0 and j == 0:
            return cost
        prev = []
        if i > 0:
            prev.append(best(i - 1, j))
        if j > 0:
            prev.append(best(i, j - 1))
        if i > 0 and j > 0:
            prev.append(best(i - 1, j - 1))
        return cost + min(prev)

    return math.sqrt(best(len(a) - 1, len(b) - 1))


def upgma_reference_labels(dist, k):
    """Average-linkage labels, recomputing every cluster distance from scratch.

    Clusters are numbered by their smallest original index, matching the
    package's canonical labeling.
    """
    dist = np.asarray(dist, dtype=float)
    clusters = [[i] for i in range(dist.shape[0])]
    while len(clusters) > k:
        best = None
        for p in range(len(clusters)):
            for q in range(p + 1, len(clusters)):
                d = float(
                    np.mean([dist[i, j] for i in clusters[p] for j in clusters[q]])
                )
                if best is None or d < best[0]:
                    best = (d, p, q)
        _, p, q = best
        clusters[p] = clusters[p] + clusters[q]
        del clusters[q]
    labels = np.empty(dist.shape[0], dtype=int)
    for rank, members in enumerate(sorted(clusters, key=min)):
        for i in members:
            labels[i] = rank
    return labels


def exact_ranksum_p(x, y):
    """Exact two-sided rank-sum p-value by enumerating all splits.

    Counts label assignments whose rank-sum deviates from the null mean
    at least as much as the observed one.  Only feasible for small n.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    combined = np.concatenate([x, y])
    ranks = rankdata(combined)
    n1 = x.size
    mean_w = n1 * (combined.size + 1) / 2.0
    dev = abs(float(ranks[:n1].sum()) - mean_w)
    hits = total = 0
    for subset in combinations(range(combined.size), n1):
        total += 1
        if abs(float(ranks[list(subset)].sum()) - mean_w) >= dev - 1e-12:
            hits += 1
    return hits / total


def spearman(a, b):
    """Spearman rank correlation without the scipy wrapper."""
    ra = rankdata(np.asarray(a, float))
    rb = rankdata(np.asarray(b, float))
    return float(np.corrcoef(ra, rb)[0, 1])


def draw_course(rng, t, hp, grid=None, idx=0):
    """One synthetic course drawn from the noisy GP prior itself."""
    from tcsim.timecourse import TimeCourse

    if grid is None:
        grid = np.sort(rng.uniform(0.0, 1.0, size=t))
        while np.any(np.diff(grid) <= 1e-9):
            grid = np.sort(rng.uniform(0.0, 1.0, size=t))
    cov = noisy_cov(grid, hp)
    values = rng.multivariate_normal(np.zeros(len(grid)), cov, method="cholesky")
    return TimeCourse(grid, values, f"c{idx:03d}")


def draw_hyperparams(rng, noise_lo=1e-3, noise_hi=0.5):
    """Hyperparameters spread over a few orders of magnitude.

    Score-equality tests pass ``noise_lo=0.02``: below that the
    likelihood-ratio scores of independent draws blow up towards 1e7 and
    no implementation can agree with an oracle to tight absolute
    tolerances in double precision.
    """
    from tcsim.gp import Hyperparams

    return Hyperparams(
        lengthscale=float(np.exp(rng.uniform(np.log(0.05), np.log(2.0)))),
        signal_std=float(np.exp(rng.uniform(np.log(0.2), np.log(3.0)))),
        noise_std=float(np.exp(rng.uniform(np.log(noise_lo), np.log(noise_hi)))),
    )
