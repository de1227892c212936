"""Clustering algorithms driven by a pairwise score matrix.

Two methods: spectral clustering on a binary kNN affinity graph, and
agglomerative clustering with unweighted average linkage (UPGMA).  Both
consume a SimilarityMatrix in either orientation (the kNN ranking adapts
to the orientation; average linkage requires a dissimilarity, so GP
similarities must be negated by the caller first).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components
from sklearn.cluster import KMeans

from .errors import (
    DegenerateClusteringError,
    EigenSolverError,
    InvalidInputError,
    InvalidOrientationError,
    ParseError,
)
from .similarity import DISSIMILARITY, SIMILARITY, SimilarityMatrix


@dataclass(frozen=True)
class ClusterAssignment:
    """Cluster labels for N items; labels lie in [0, k) with no empty cluster."""

    labels: np.ndarray
    k: int
    ids: tuple = None

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise InvalidInputError("labels must be a non-empty 1-D vector")
        if not np.issubdtype(labels.dtype, np.integer):
            as_int = labels.astype(int)
            if not np.array_equal(as_int, labels):
                raise InvalidInputError("labels must be integers")
            labels = as_int
        if self.k < 1:
            raise InvalidInputError(f"k must be >= 1, got {self.k}")
        present = np.unique(labels)
        if present.min() < 0 or present.max() >= self.k:
            raise InvalidInputError(f"labels must lie in [0, {self.k})")
        if present.size != self.k:
            raise InvalidInputError(
                f"expected {self.k} non-empty clusters, found {present.size}"
            )
        labels = labels.copy()
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        if self.ids is not None:
            ids = tuple(str(i) for i in self.ids)
            if len(ids) != labels.size:
                raise InvalidInputError("ids length does not match labels")
            object.__setattr__(self, "ids", ids)

    def __len__(self):
        return self.labels.size

    def save(self, path) -> None:
        if self.ids is None:
            raise InvalidInputError("cannot serialize an assignment without ids")
        with open(path, "w") as fh:
            fh.write("series_id,label\n")
            for sid, lab in zip(self.ids, self.labels):
                fh.write(f"{sid},{lab}\n")

    @classmethod
    def load(cls, path) -> "ClusterAssignment":
        ids = []
        labels = []
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(",")
                if not ids and parts == ["series_id", "label"]:
                    continue
                if len(parts) != 2:
                    raise ParseError("expected 'series_id,label'", path, lineno)
                try:
                    labels.append(int(parts[1]))
                except ValueError as exc:
                    raise ParseError(f"bad label: {exc}", path, lineno) from exc
                ids.append(parts[0])
        if not labels:
            raise ParseError("no label rows found", path)
        return cls(np.array(labels), max(labels) + 1, tuple(ids))


@dataclass(frozen=True)
class AffinityGraph:
    """Binary symmetric kNN affinity with the scores it was ranked from.

    The source scores and their orientation ride along so that
    disconnected components can be merged by best inter-component score.
    """

    adjacency: np.ndarray
    k_neighbors: int
    scores: np.ndarray = None
    orientation: str = SIMILARITY
    ids: tuple = None

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=float)
        n = adj.shape[0]
        if adj.ndim != 2 or adj.shape[1] != n:
            raise InvalidInputError("adjacency must be square")
        if np.any(adj < 0) or not np.isfinite(adj).all():
            raise InvalidInputError("adjacency must be non-negative and finite")
        if not np.array_equal(adj, adj.T):
            raise InvalidInputError("adjacency must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise InvalidInputError("adjacency diagonal must be zero")
        if not 1 <= self.k_neighbors < n:
            raise InvalidInputError(f"k_neighbors must be in [1, {n}), got {self.k_neighbors}")
        adj.flags.writeable = False
        object.__setattr__(self, "adjacency", adj)

    def __len__(self):
        return self.adjacency.shape[0]


def knn_graph(m: SimilarityMatrix, k: int) -> AffinityGraph:
    """Binary union-symmetrized k-nearest-neighbor graph.

    Each node selects its k best-scoring neighbors (largest under
    similarity orientation, smallest under dissimilarity); an edge exists
    if either endpoint selected the other.  Ties resolve to the lowest
    index, so the construction is rank-based and therefore invariant
    under any strictly increasing transform of the scores.
    """
    n = len(m)
    if not 1 <= k < n:
        raise InvalidInputError(f"k must satisfy 1 <= k < N={n}, got {k}")
    adjacency = np.zeros((n, n))
    for i in range(n):
        keys = m.scores[i].copy() if m.orientation == DISSIMILARITY else -m.scores[i]
        keys[i] = np.inf
        order = np.argsort(keys, kind="stable")
        adjacency[i, order[:k]] = 1.0
    adjacency = np.maximum(adjacency, adjacency.T)
    return AffinityGraph(adjacency, k, m.scores, m.orientation, m.ids)


def _merge_components(adjacency, scores, orientation, target):
    """Connect surplus components, smallest first, each to the component
    holding its best inter-component score."""
    adjacency = adjacency.copy()
    keys = scores if orientation == DISSIMILARITY else -scores
    n_components, labels = connected_components(adjacency, directed=False)
    while n_components > target:
        sizes = np.bincount(labels, minlength=n_components)
        smallest = int(np.argmin(sizes))
        inside = np.flatnonzero(labels == smallest)
        outside = np.flatnonzero(labels != smallest)
        block = keys[np.ix_(inside, outside)]
        flat = int(np.argmin(block))
        bi, bo = divmod(flat, outside.size)
        i, j = int(inside[bi]), int(outside[bo])
        adjacency[i, j] = adjacency[j, i] = 1.0
        n_components, labels = connected_components(adjacency, directed=False)
    return adjacency


def spectral_cluster(g: AffinityGraph, k_clusters: int, seed: int) -> ClusterAssignment:
    """Normalized spectral clustering of an affinity graph.

    Builds the symmetric normalized Laplacian L = I - D^{-1/2} A D^{-1/2},
    takes the eigenvectors of its k smallest eigenvalues, row-normalizes
    them and runs seeded k-means (k-means++ init, 50 restarts, best
    inertia).  If the graph has more connected components than clusters,
    surplus components are first merged by best inter-component score.
    """
    n = len(g)
    if not 1 <= k_clusters <= n:
        raise InvalidInputError(f"k_clusters must be in [1, {n}], got {k_clusters}")
    adjacency = g.adjacency
    n_components, _ = connected_components(adjacency, directed=False)
    if n_components > k_clusters:
        if g.scores is None:
            raise InvalidInputError(
                f"graph has {n_components} components > {k_clusters} clusters "
                "and carries no scores to merge them with"
            )
        adjacency = _merge_components(adjacency, g.scores, g.orientation, k_clusters)

    degree = adjacency.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(degree)
    laplacian = np.eye(n) - (inv_sqrt[:, None] * adjacency) * inv_sqrt[None, :]
    laplacian = 0.5 * (laplacian + laplacian.T)
    try:
        _, vectors = scipy.linalg.eigh(laplacian, subset_by_index=(0, k_clusters - 1))
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"Laplacian eigendecomposition failed: {exc}") from exc
    norms = np.linalg.norm(vectors, axis=1)
    vectors = vectors / np.where(norms > 0, norms, 1.0)[:, None]

    km = KMeans(
        n_clusters=k_clusters,
        init="k-means++",
        n_init=50,
        random_state=seed,
    ).fit(vectors)
    labels = km.labels_.astype(int)
    if np.unique(labels).size != k_clusters:
        raise DegenerateClusteringError(
            f"k-means produced {np.unique(labels).size} of {k_clusters} clusters"
        )
    return ClusterAssignment(_canonical_labels(labels, k_clusters), k_clusters, g.ids)


def _canonical_labels(labels, k):
    """Relabel clusters by order of first appearance (stable across runs)."""
    mapping = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    if len(mapping) != k:
        raise DegenerateClusteringError(f"found {len(mapping)} of {k} clusters")
    return out


def average_linkage_merges(dist: np.ndarray):
    """Full UPGMA merge sequence for a dissimilarity matrix.

    Returns one (i, j, height) triple per merge, i < j, where cluster j
    is absorbed into cluster i and height is the average inter-cluster
    dissimilarity at the merge.  Ties go to the lexicographically
    smallest (i, j).  The sequence is invariant under a*dist + b, a > 0.
    """
    D = np.array(dist, dtype=float)
    n = D.shape[0]
    if D.ndim != 2 or D.shape[1] != n:
        raise InvalidInputError("dissimilarity matrix must be square")
    np.fill_diagonal(D, np.inf)
    sizes = np.ones(n)
    merges = []
    for _ in range(n - 1):
        flat = int(np.argmin(D))
        i, j = divmod(flat, n)
        height = D[i, j]
        merged = (sizes[i] * D[i, :] + sizes[j] * D[j, :]) / (sizes[i] + sizes[j])
        D[i, :] = merged
        D[:, i] = merged
        D[i, i] = np.inf
        D[j, :] = np.inf
        D[:, j] = np.inf
        sizes[i] += sizes[j]
        merges.append((int(i), int(j), float(height)))
    return merges


def hierarchical_average_linkage(m: SimilarityMatrix, k_clusters: int) -> ClusterAssignment:
    """Agglomerative average-linkage clustering cut at k_clusters.

    Requires dissimilarity orientation; negate a GP similarity first
    (average linkage is affine-equivariant, so negative entries are fine).
    """
    if m.orientation != DISSIMILARITY:
        raise InvalidOrientationError(
            "average linkage requires a dissimilarity matrix; negate similarities first"
        )
    n = len(m)
    if not 1 <= k_clusters <= n:
        raise InvalidInputError(f"k_clusters must be in [1, {n}], got {k_clusters}")
    members = {i: [i] for i in range(n)}
    for i, j, _ in average_linkage_merges(m.scores)[: n - k_clusters]:
        members[i].extend(members[j])
        del members[j]
    labels = np.empty(n, dtype=int)
    for idx, root in enumerate(sorted(members, key=lambda r: min(members[r]))):
        labels[members[root]] = idx
    return ClusterAssignment(labels, k_clusters, m.ids)
