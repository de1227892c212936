"""Pairwise (dis)similarity measures between time courses.

Five measures share one matrix interface: Euclidean distance, Pearson
correlation distance, dynamic time warping, an RKHS divergence between
GP posterior means, and a GP log-likelihood-ratio score that compares
the "same underlying curve" hypothesis against "two independent curves".
The GP score is a similarity (larger means more alike); the other four
are dissimilarities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .errors import (
    DegenerateInputError,
    IncompatibleGridsError,
    InvalidInputError,
    InvalidOrientationError,
    NumericalError,
    PairwiseError,
    ParseError,
)
from .gp import FittedModel, assemble_covariance, factorize_psd, kernel_matrix, lml_terms
from .timecourse import _FMT, TimeCourse, common_grid, shares_grid

SIMILARITY = "similarity"
DISSIMILARITY = "dissimilarity"
ORIENTATIONS = (SIMILARITY, DISSIMILARITY)
MEASURES = ("gp", "euclidean", "correlation", "dtw", "bregman")


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric matrix of pairwise scores plus labeling metadata.

    orientation "similarity" means larger is more alike, "dissimilarity"
    means smaller is more alike.  Dissimilarity matrices have an exactly
    zero diagonal; the GP similarity diagonal is stored as computed (it
    reflects how well the shared-curve hypothesis explains duplicated
    data, i.e. the noise level).
    """

    scores: np.ndarray
    ids: tuple
    measure_name: str
    orientation: str

    def __post_init__(self):
        scores = np.array(self.scores, dtype=float)
        if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
            raise InvalidInputError(f"scores must be square, got shape {scores.shape}")
        if not np.isfinite(scores).all():
            raise InvalidInputError("scores contain non-finite entries")
        if not np.array_equal(scores, scores.T):
            raise InvalidInputError("scores matrix is not exactly symmetric")
        if self.orientation not in ORIENTATIONS:
            raise InvalidOrientationError(
                f"orientation must be one of {ORIENTATIONS}, got {self.orientation!r}"
            )
        if self.orientation == DISSIMILARITY and np.any(np.diag(scores) != 0.0):
            raise InvalidInputError("dissimilarity matrix must have a zero diagonal")
        ids = tuple(str(i) for i in self.ids)
        if len(ids) != scores.shape[0]:
            raise InvalidInputError(
                f"{len(ids)} ids for a {scores.shape[0]}x{scores.shape[0]} matrix"
            )
        if len(set(ids)) != len(ids):
            raise InvalidInputError("series ids must be unique")
        for i in ids:
            if not i or any(c in i for c in ",\n\r") or i.strip() != i:
                raise InvalidInputError(f"id {i!r} not usable in CSV headers")
        if not self.measure_name or any(c.isspace() for c in self.measure_name):
            raise InvalidInputError(f"bad measure name {self.measure_name!r}")
        scores.flags.writeable = False
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return self.scores.shape[0]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# measure={self.measure_name} orientation={self.orientation}\n")
            fh.write("id," + ",".join(self.ids) + "\n")
            for row_id, row in zip(self.ids, self.scores):
                fh.write(row_id + "," + ",".join(_FMT % v for v in row) + "\n")

    @classmethod
    def load(cls, path) -> "SimilarityMatrix":
        measure = orientation = None
        header = None
        rows = []
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    for token in line[1:].split():
                        key, sep, value = token.partition("=")
                        if sep and key == "measure":
                            measure = value
                        elif sep and key == "orientation":
                            orientation = value
                    continue
                parts = line.split(",")
                if header is None:
                    if parts[0] != "id":
                        raise ParseError("expected header starting with 'id'", path, lineno)
                    header = parts[1:]
                else:
                    rows.append((lineno, parts))
        if measure is None or orientation is None:
            raise ParseError("missing '# measure=... orientation=...' line", path)
        if header is None:
            raise ParseError("missing id header row", path)
        n = len(header)
        if len(rows) != n:
            raise ParseError(f"expected {n} data rows, found {len(rows)}", path)
        scores = np.empty((n, n))
        for i, (lineno, parts) in enumerate(rows):
            if len(parts) != n + 1:
                raise ParseError(f"expected {n + 1} columns, found {len(parts)}", path, lineno)
            if parts[0] != header[i]:
                raise ParseError(
                    f"row id {parts[0]!r} does not match header id {header[i]!r}",
                    path,
                    lineno,
                )
            try:
                scores[i] = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise ParseError(f"bad number: {exc}", path, lineno) from exc
        return cls(scores, tuple(header), measure, orientation)


def to_dissimilarity(m: SimilarityMatrix) -> SimilarityMatrix:
    """Negated copy of a similarity matrix, usable where a dissimilarity
    is required (e.g. average linkage).  The diagonal is zeroed: self-
    dissimilarity is 0 by definition and consumers never read it.
    Dissimilarity inputs pass through unchanged."""
    if m.orientation == DISSIMILARITY:
        return m
    scores = -m.scores
    np.fill_diagonal(scores, 0.0)
    return SimilarityMatrix(scores, m.ids, m.measure_name, DISSIMILARITY)


def _require_shared_grid(a: TimeCourse, b: TimeCourse, measure: str):
    if not shares_grid(a, b):
        raise IncompatibleGridsError(
            f"{measure} requires identical time grids "
            f"(got {len(a)} and {len(b)} points for {a.id!r}, {b.id!r})"
        )


def euclidean(a: TimeCourse, b: TimeCourse) -> float:
    """Plain L2 distance between value vectors on a shared grid."""
    _require_shared_grid(a, b, "euclidean")
    return float(np.linalg.norm(a.values - b.values))


def correlation_distance(a: TimeCourse, b: TimeCourse) -> float:
    """1 - Pearson correlation, clipped into [0, 2]."""
    _require_shared_grid(a, b, "correlation")
    for tc in (a, b):
        if float(np.std(tc.values)) == 0.0:
            raise DegenerateInputError(
                f"correlation undefined for zero-variance series {tc.id!r}"
            )
    r = float(np.corrcoef(a.values, b.values)[0, 1])
    return min(2.0, max(0.0, 1.0 - r))


def _dtw_pair_block(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """DTW distances for a stack of pairs with common lengths.

    A is (m, ta) and B is (m, tb); row p of each holds the value vectors
    of pair p.  Classic O(ta*tb) dynamic program with squared local cost
    and an unconstrained window, vectorized across the pair axis; the
    returned distance is the square root of the accumulated cost.
    """
    m, ta = A.shape
    tb = B.shape[1]
    acc = np.full((m, ta + 1, tb + 1), np.inf)
    acc[:, 0, 0] = 0.0
    for i in range(1, ta + 1):
        ai = A[:, i - 1]
        for j in range(1, tb + 1):
            best = np.minimum(acc[:, i - 1, j], acc[:, i, j - 1])
            np.minimum(best, acc[:, i - 1, j - 1], out=best)
            acc[:, i, j] = (ai - B[:, j - 1]) ** 2 + best
    return np.sqrt(acc[:, ta, tb])


def dtw(a: TimeCourse, b: TimeCourse) -> float:
    """Dynamic-time-warping distance; time stamps are ignored."""
    return float(_dtw_pair_block(a.values[None, :], b.values[None, :])[0])


def _canonical_pair(a: TimeCourse, b: TimeCourse):
    """Deterministic ordering so asymmetric evaluation orders cannot leak
    into scores that must be exactly symmetric."""
    key_a = (a.grid_key(), tuple(a.values.tolist()), a.id)
    key_b = (b.grid_key(), tuple(b.values.tolist()), b.id)
    return (a, b) if key_a <= key_b else (b, a)


def bregman_rkhs(a: TimeCourse, b: TimeCourse, model: FittedModel) -> float:
    """Squared RKHS distance between the two GP posterior mean functions.

    With alpha_i = K_{y_i}^{-1} y_i the posterior mean is
    mu_i = k(., X_i) alpha_i and
    ||mu_a - mu_b||^2 = a'K_aa a - 2 a'K_ab b + b'K_bb b.
    Non-negative up to round-off; clamped at zero.
    """
    a, b = _canonical_pair(a, b)
    hp = model.hyperparams
    bundle_a = model.bundle_for(a.times)
    bundle_b = model.bundle_for(b.times)
    alpha_a = bundle_a.solve(a.values)
    alpha_b = bundle_b.solve(b.values)
    self_a = float(alpha_a @ (bundle_a.gram @ alpha_a))
    self_b = float(alpha_b @ (bundle_b.gram @ alpha_b))
    cross = float(alpha_a @ (kernel_matrix(a.times, b.times, hp) @ alpha_b))
    return max(0.0, (self_a + self_b) - 2.0 * cross)


def _schur_context(bundle, hp):
    """Factorized Schur complement Q = K_y - K K_y^{-1} K for one grid.

    Because K_y = K + noise_std^2 I, direct algebra collapses the Schur
    complement to Q = 2 s2 I - s2^2 K_y^{-1} (s2 = noise_std^2), which is
    numerically far better conditioned than forming K K_y^{-1} K when the
    noise is tiny.  Returns the Cholesky factor of Q and
    log(det Q / det K_y).
    """
    s2 = hp.noise_std**2
    t = bundle.times.size
    cov_inv = bundle.solve(np.eye(t))
    schur = 2.0 * s2 * np.eye(t) - s2 * s2 * cov_inv
    schur = 0.5 * (schur + schur.T)
    chol_q, logdet_q, _ = factorize_psd(schur, "Schur complement")
    return chol_q, logdet_q - bundle.logdet


def _sync_score(bundle, chol_q, logdet_ratio, hp, ya, yb):
    """Shared-grid GP score for one pair, written so that swapping the
    arguments produces bit-identical floating point."""
    s2 = hp.noise_std**2
    alpha_a = bundle.solve(ya)
    alpha_b = bundle.solve(yb)
    u_a = cho_solve((chol_q, True), ya)
    u_b = cho_solve((chol_q, True), yb)
    # v = K alpha, computed stably as y - s2*alpha since K = K_y - s2 I
    v_a = ya - s2 * alpha_a
    v_b = yb - s2 * alpha_b
    e_a = float(ya @ alpha_a) - float(ya @ u_a)
    e_b = float(yb @ alpha_b) - float(yb @ u_b)
    cross = float(u_a @ v_b) + float(u_b @ v_a)
    return 0.5 * ((e_a + e_b) + cross) - 0.5 * logdet_ratio


def gp_similarity_sync(a: TimeCourse, b: TimeCourse, model: FittedModel) -> float:
    """Log-likelihood ratio score s(a, b) on a shared grid.

    s = log p(joint values | same curve) - log p(values | independent
    curves); evaluated through the Schur complement Q of the 2x2-block
    joint covariance, so one factorization of K_y and one of Q serve an
    entire grid.
    """
    _require_shared_grid(a, b, "the synchronous GP score")
    bundle = model.bundle_for(a.times)
    chol_q, logdet_ratio = _schur_context(bundle, model.hyperparams)
    return _sync_score(bundle, chol_q, logdet_ratio, model.hyperparams, a.values, b.values)


def gp_similarity_async(a: TimeCourse, b: TimeCourse, model: FittedModel) -> float:
    """Log-likelihood ratio score for courses with arbitrary grids.

    Assembles the (t_a + t_b) joint covariance of the shared-curve
    hypothesis (cross block = kernel between the two grids) and compares
    its log-density against the sum of the two independent log-densities.
    """
    a, b = _canonical_pair(a, b)
    bundle_a = model.bundle_for(a.times)
    bundle_b = model.bundle_for(b.times)
    _, lml_a = lml_terms(a.values, bundle_a)
    _, lml_b = lml_terms(b.values, bundle_b)
    joint = assemble_covariance(
        np.concatenate([a.times, b.times]), model.hyperparams
    )
    _, lml_joint = lml_terms(np.concatenate([a.values, b.values]), joint)
    return lml_joint - (lml_a + lml_b)


def _gp_matrix_shared(Y: np.ndarray, bundle, hp) -> np.ndarray:
    """All-pairs GP scores on one grid: one K_y and one Q factorization,
    then O(N^2 t) matrix products.  Every term is assembled from
    exactly-symmetric pieces so the result is bitwise symmetric."""
    s2 = hp.noise_std**2
    A = bundle.solve(Y)
    chol_q, logdet_ratio = _schur_context(bundle, hp)
    U = cho_solve((chol_q, True), Y)
    V = Y - s2 * A
    e = np.einsum("ij,ij->j", Y, A) - np.einsum("ij,ij->j", Y, U)
    M = U.T @ V
    return 0.5 * ((e[:, None] + e[None, :]) + (M + M.T)) - 0.5 * logdet_ratio


def _bregman_matrix_shared(Y: np.ndarray, bundle) -> np.ndarray:
    A = bundle.solve(Y)
    G = A.T @ (bundle.gram @ A)
    G = 0.5 * (G + G.T)
    g = np.diag(G)
    scores = (g[:, None] + g[None, :]) - 2.0 * G
    np.maximum(scores, 0.0, out=scores)
    np.fill_diagonal(scores, 0.0)
    return scores


def _bregman_matrix_mixed(dataset, ids, model) -> np.ndarray:
    """Per-pair RKHS divergences with the per-course solves hoisted out
    of the pair loop; only the cross-kernel term is pairwise work."""
    hp = model.hyperparams
    n = len(dataset)
    alphas = []
    self_norms = []
    for tc in dataset:
        bundle = model.bundle_for(tc.times)
        alpha = bundle.solve(tc.values)
        alphas.append(alpha)
        self_norms.append(float(alpha @ (bundle.gram @ alpha)))
    scores = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            try:
                cross = float(
                    alphas[i]
                    @ (kernel_matrix(dataset[i].times, dataset[j].times, hp) @ alphas[j])
                )
            except NumericalError as exc:
                raise PairwiseError(ids[i], ids[j], exc) from exc
            scores[i, j] = scores[j, i] = max(
                0.0, (self_norms[i] + self_norms[j]) - 2.0 * cross
            )
    return scores


def _dataset_ids(dataset) -> tuple:
    ids = tuple(tc.id if tc.id else str(i) for i, tc in enumerate(dataset))
    if len(set(ids)) != len(ids):
        raise InvalidInputError("dataset contains duplicate series ids")
    return ids


def _pairwise_loop(dataset, ids, fn) -> np.ndarray:
    """Evaluate fn on every unordered pair; numerical failures are
    re-raised naming the offending pair."""
    n = len(dataset)
    scores = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            try:
                scores[i, j] = scores[j, i] = fn(dataset[i], dataset[j])
            except NumericalError as exc:
                raise PairwiseError(ids[i], ids[j], exc) from exc
    return scores


def _gp_matrix_mixed(dataset, ids, model) -> np.ndarray:
    """General-grid GP scores: cached per-grid factorizations, synchronous
    fast path for pairs that share a grid, joint-covariance path otherwise."""
    hp = model.hyperparams
    n = len(dataset)
    contexts = {}
    lml = np.empty(n)
    for i, tc in enumerate(dataset):
        key = tc.grid_key()
        if key not in contexts:
            bundle = model.bundle_for(tc.times)
            contexts[key] = (bundle, None)
        _, lml[i] = lml_terms(tc.values, contexts[key][0])

    def sync_ctx(key):
        bundle, ctx = contexts[key]
        if ctx is None:
            ctx = _schur_context(bundle, hp)
            contexts[key] = (bundle, ctx)
        return bundle, ctx

    scores = np.zeros((n, n))
    for i in range(n):
        tc_i = dataset[i]
        key_i = tc_i.grid_key()
        for j in range(i + 1, n):
            tc_j = dataset[j]
            try:
                if key_i == tc_j.grid_key():
                    bundle, (chol_q, logdet_ratio) = sync_ctx(key_i)
                    val = _sync_score(
                        bundle, chol_q, logdet_ratio, hp, tc_i.values, tc_j.values
                    )
                else:
                    joint = assemble_covariance(
                        np.concatenate([tc_i.times, tc_j.times]), hp
                    )
                    _, lml_joint = lml_terms(
                        np.concatenate([tc_i.values, tc_j.values]), joint
                    )
                    val = lml_joint - (lml[i] + lml[j])
            except NumericalError as exc:
                raise PairwiseError(ids[i], ids[j], exc) from exc
            scores[i, j] = scores[j, i] = val
    return scores


def _euclidean_matrix_shared(Y: np.ndarray) -> np.ndarray:
    """All-pairs Euclidean distances for columns of Y, one (n, n) update
    per time row; exactly symmetric with an exactly zero diagonal."""
    sq = np.zeros((Y.shape[1], Y.shape[1]))
    for row in Y:
        d = row[:, None] - row[None, :]
        sq += d * d
    return np.sqrt(sq)


def _dtw_matrix(dataset) -> np.ndarray:
    n = len(dataset)
    scores = np.zeros((n, n))
    by_shape = {}
    for i in range(n):
        for j in range(i + 1, n):
            by_shape.setdefault((len(dataset[i]), len(dataset[j])), []).append((i, j))
    for pairs in by_shape.values():
        A = np.stack([dataset[i].values for i, _ in pairs])
        B = np.stack([dataset[j].values for _, j in pairs])
        for (i, j), val in zip(pairs, _dtw_pair_block(A, B)):
            scores[i, j] = scores[j, i] = val
    return scores


def pairwise_matrix(dataset, measure: str, model: FittedModel = None) -> SimilarityMatrix:
    """Full pairwise matrix for one measure over a dataset.

    On a dataset whose courses all share one grid, the GP, Bregman and
    Euclidean measures run batched (for GP and Bregman one factorization
    set covers the whole matrix); otherwise they fall back to per-pair
    evaluation.  The gp measure produces a similarity orientation, all
    others dissimilarities.
    """
    if measure not in MEASURES:
        raise InvalidInputError(f"unknown measure {measure!r}; choose from {MEASURES}")
    dataset = list(dataset)
    if not dataset:
        raise InvalidInputError("empty dataset")
    ids = _dataset_ids(dataset)
    if measure in ("gp", "bregman") and model is None:
        raise InvalidInputError(f"measure {measure!r} requires a fitted model")

    grid = common_grid(dataset)
    if measure == "euclidean":
        if grid is not None:
            scores = _euclidean_matrix_shared(
                np.column_stack([tc.values for tc in dataset])
            )
        else:
            scores = _pairwise_loop(dataset, ids, euclidean)
    elif measure == "correlation":
        scores = _pairwise_loop(dataset, ids, correlation_distance)
    elif measure == "dtw":
        scores = _dtw_matrix(dataset)
    elif measure == "bregman":
        if grid is not None:
            Y = np.column_stack([tc.values for tc in dataset])
            scores = _bregman_matrix_shared(Y, model.bundle_for(grid))
        else:
            scores = _bregman_matrix_mixed(dataset, ids, model)
    else:
        if grid is not None:
            Y = np.column_stack([tc.values for tc in dataset])
            scores = _gp_matrix_shared(Y, model.bundle_for(grid), model.hyperparams)
        else:
            scores = _gp_matrix_mixed(dataset, ids, model)

    orientation = SIMILARITY if measure == "gp" else DISSIMILARITY
    return SimilarityMatrix(scores, ids, measure, orientation)
