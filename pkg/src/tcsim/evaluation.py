"""Clustering-quality metrics and the statistics used to compare runs.

NMI scores a clustering against ground truth; BHI scores it against an
external pairwise similarity (e.g. annotation-derived), normalized to a
z-score against size-preserving random relabelings; the Wilcoxon
rank-sum test compares two samples of per-repeat scores.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.special import erfc
from scipy.stats import rankdata

from .clustering import ClusterAssignment
from .errors import (
    DegenerateClusteringError,
    DegenerateNullError,
    InvalidInputError,
)
from .similarity import SimilarityMatrix


def nmi(a: ClusterAssignment, b: ClusterAssignment) -> float:
    """Normalized mutual information I(a;b) / sqrt(H(a) H(b)) in [0, 1].

    Natural-log entropies.  Identical partitions (up to relabeling)
    return exactly 1; if either partition has zero entropy and they
    differ, returns exactly 0 by convention.
    """
    la = np.asarray(a.labels)
    lb = np.asarray(b.labels)
    if la.size != lb.size:
        raise InvalidInputError(f"partition sizes differ: {la.size} vs {lb.size}")
    n = la.size
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    counts = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(counts, (ia, ib), 1.0)

    one_to_one = (
        counts.shape[0] == counts.shape[1]
        and np.all((counts > 0).sum(axis=0) == 1)
        and np.all((counts > 0).sum(axis=1) == 1)
    )
    if one_to_one:
        return 1.0

    row = counts.sum(axis=1)
    col = counts.sum(axis=0)
    h_a = -np.sum(row / n * np.log(row / n))
    h_b = -np.sum(col / n * np.log(col / n))
    if h_a == 0.0 or h_b == 0.0:
        return 0.0
    nz = counts > 0
    p = counts[nz] / n
    outer = np.outer(row, col)[nz] / (n * n)
    info = float(np.sum(p * np.log(p / outer)))
    return min(1.0, max(0.0, info / math.sqrt(h_a * h_b)))


def _bhi(labels: np.ndarray, k: int, scores: np.ndarray, warn: bool) -> float:
    terms = []
    for lab in range(k):
        idx = np.flatnonzero(labels == lab)
        if idx.size < 2:
            if warn:
                warnings.warn(
                    f"cluster {lab} has {idx.size} member(s); skipped in BHI",
                    stacklevel=3,
                )
            continue
        block = scores[np.ix_(idx, idx)]
        off_diagonal = ~np.eye(idx.size, dtype=bool)
        total = float(block[off_diagonal].sum())
        terms.append(total / (idx.size * (idx.size - 1)))
    if not terms:
        raise DegenerateClusteringError("every cluster is a singleton; BHI undefined")
    return float(np.mean(terms))


def _check_alignment(c: ClusterAssignment, s: SimilarityMatrix):
    if len(c) != len(s):
        raise InvalidInputError(f"{len(c)} labels for a {len(s)}x{len(s)} matrix")
    if c.ids is not None and tuple(c.ids) != tuple(s.ids):
        raise InvalidInputError("clustering ids and matrix ids disagree")


def bhi(c: ClusterAssignment, s: SimilarityMatrix) -> float:
    """Mean within-cluster pairwise score.

    BHI = (1/L) sum_l [1/(n_l (n_l - 1))] sum_{i != j in l} S(i, j).
    Singleton clusters carry no within-cluster pairs; they are skipped
    with a warning and L reduced accordingly.  The matrix diagonal is
    never read.
    """
    _check_alignment(c, s)
    return _bhi(c.labels, c.k, s.scores, warn=True)


def bhi_zscore(c: ClusterAssignment, s: SimilarityMatrix, n_random: int, seed: int) -> float:
    """BHI of ``c`` standardized against random size-preserving clusterings.

    The null resamples are label-vector permutations, which preserve the
    multiset of cluster sizes exactly.  Each permutation uses its own
    counter-derived generator, so results do not depend on evaluation
    order.  Sample (ddof=1) standard deviation; an all-equal null is an
    error.
    """
    if n_random < 2:
        raise InvalidInputError(f"n_random must be >= 2, got {n_random}")
    _check_alignment(c, s)
    observed = _bhi(c.labels, c.k, s.scores, warn=True)
    null = np.empty(n_random)
    for r in range(n_random):
        rng = np.random.default_rng([seed, r])
        permuted = c.labels[rng.permutation(len(c))]
        null[r] = _bhi(permuted, c.k, s.scores, warn=False)
    spread = float(np.std(null, ddof=1))
    if spread == 0.0:
        raise DegenerateNullError(
            "all randomized BHI values are identical; z-score undefined"
        )
    return (observed - float(np.mean(null))) / spread


def wilcoxon_rank_sum(x, y) -> float:
    """Two-sided Wilcoxon rank-sum p-value, normal approximation.

    Uses average ranks, the tie-corrected variance and a 0.5 continuity
    correction.  Degenerate case (zero rank variance, i.e. every value
    identical) returns p = 1.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size == 0 or y.size == 0:
        raise InvalidInputError("both samples must be non-empty")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise InvalidInputError("samples contain non-finite values")
    n1, n2 = x.size, y.size
    n = n1 + n2
    combined = np.concatenate([x, y])
    ranks = rankdata(combined)
    w = float(ranks[:n1].sum())
    mean_w = n1 * (n + 1) / 2.0
    _, tie_counts = np.unique(combined, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (n * (n - 1))
    var_w = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var_w <= 0.0:
        return 1.0
    diff = w - mean_w
    z = (diff - 0.5 * np.sign(diff)) / math.sqrt(var_w)
    p = float(erfc(abs(z) / math.sqrt(2.0)))
    return max(min(p, 1.0), np.finfo(float).tiny)
