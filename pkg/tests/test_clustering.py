"""Tests for the kNN graph, spectral clustering and average linkage.

Average linkage is validated against a from-scratch reference that
recomputes every inter-cluster mean, and against a worked example with
hand-computed merge heights.
"""

import numpy as np
import pytest

from helpers import draw_course, upgma_reference_labels
from tcsim.clustering import (
    AffinityGraph,
    ClusterAssignment,
    average_linkage_merges,
    hierarchical_average_linkage,
    knn_graph,
    spectral_cluster,
)
from tcsim.errors import (
    InvalidInputError,
    InvalidOrientationError,
    ParseError,
)
from tcsim.evaluation import nmi
from tcsim.gp import Hyperparams, OptimizerConfig, fit_shared_hyperparams
from tcsim.similarity import SimilarityMatrix, pairwise_matrix, to_dissimilarity
from tcsim.synthdata import SynthConfig, generate


def _sim(scores, orientation="similarity", ids=None):
    scores = np.asarray(scores, dtype=float)
    if ids is None:
        ids = tuple(f"n{i}" for i in range(scores.shape[0]))
    return SimilarityMatrix(scores, ids, "gp" if orientation == "similarity" else "euclidean", orientation)


def _random_symmetric(rng, n, zero_diag=False):
    half = rng.standard_normal((n, n))
    scores = half + half.T
    if zero_diag:
        scores = np.abs(scores)
        np.fill_diagonal(scores, 0.0)
    return scores


def _knn_reference(scores, k, orientation):
    """Union-symmetrized binary kNN by explicit per-row sorting."""
    n = scores.shape[0]
    adj = np.zeros((n, n))
    for i in range(n):
        others = [j for j in range(n) if j != i]
        if orientation == "similarity":
            others.sort(key=lambda j: (-scores[i, j], j))
        else:
            others.sort(key=lambda j: (scores[i, j], j))
        for j in others[:k]:
            adj[i, j] = 1.0
    return np.maximum(adj, adj.T)


class TestClusterAssignment:
    def test_valid_labels(self):
        c = ClusterAssignment(np.array([0, 1, 1, 0]), 2)
        assert len(c) == 4

    def test_float_integer_labels_coerced(self):
        c = ClusterAssignment(np.array([0.0, 1.0]), 2)
        assert c.labels.dtype.kind == "i"

    def test_fractional_labels_rejected(self):
        with pytest.raises(InvalidInputError):
            ClusterAssignment(np.array([0.0, 1.5]), 2)

    def test_out_of_range_rejected(self):
        with pytest.raises(InvalidInputError):
            ClusterAssignment(np.array([0, 2]), 2)
        with pytest.raises(InvalidInputError):
            ClusterAssignment(np.array([0, -1]), 2)

    def test_empty_cluster_rejected(self):
        with pytest.raises(InvalidInputError):
            ClusterAssignment(np.array([0, 0, 2]), 3)

    def test_save_load_round_trip(self, tmp_path):
        c = ClusterAssignment(np.array([0, 1, 2, 1]), 3, ("a", "b", "c", "d"))
        path = tmp_path / "labels.csv"
        c.save(path)
        back = ClusterAssignment.load(path)
        np.testing.assert_array_equal(back.labels, c.labels)
        assert back.ids == c.ids
        assert back.k == 3

    def test_save_requires_ids(self, tmp_path):
        c = ClusterAssignment(np.array([0, 1]), 2)
        with pytest.raises(InvalidInputError):
            c.save(tmp_path / "x.csv")

    def test_load_bad_label(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("series_id,label\na,zero\n")
        with pytest.raises(ParseError):
            ClusterAssignment.load(path)

    def test_load_empty(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("series_id,label\n")
        with pytest.raises(ParseError):
            ClusterAssignment.load(path)


class TestAffinityGraph:
    def test_rejects_asymmetric(self):
        adj = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(InvalidInputError):
            AffinityGraph(adj, 1)

    def test_rejects_nonzero_diagonal(self):
        adj = np.array([[1.0, 1.0], [1.0, 0.0]])
        with pytest.raises(InvalidInputError):
            AffinityGraph(adj, 1)

    def test_rejects_bad_k(self):
        adj = np.zeros((3, 3))
        with pytest.raises(InvalidInputError):
            AffinityGraph(adj, 0)
        with pytest.raises(InvalidInputError):
            AffinityGraph(adj, 3)


class TestKnnGraph:
    def test_matches_reference_similarity(self):
        rng = np.random.default_rng(0)
        scores = _random_symmetric(rng, 12)
        m = _sim(scores)
        for k in (1, 3, 7):
            g = knn_graph(m, k)
            np.testing.assert_array_equal(
                g.adjacency, _knn_reference(scores, k, "similarity")
            )

    def test_matches_reference_dissimilarity(self):
        rng = np.random.default_rng(1)
        scores = _random_symmetric(rng, 10, zero_diag=True)
        m = _sim(scores, "dissimilarity")
        g = knn_graph(m, 3)
        np.testing.assert_array_equal(
            g.adjacency, _knn_reference(scores, 3, "dissimilarity")
        )

    def test_orientation_changes_selection(self):
        scores = np.array(
            [
                [0.0, 5.0, 1.0],
                [5.0, 0.0, 2.0],
                [1.0, 2.0, 0.0],
            ]
        )
        g_sim = knn_graph(_sim(scores), 1)
        g_dis = knn_graph(_sim(scores, "dissimilarity"), 1)
        assert not np.array_equal(g_sim.adjacency, g_dis.adjacency)

    def test_complete_graph_at_k_max(self):
        rng = np.random.default_rng(2)
        scores = _random_symmetric(rng, 6)
        g = knn_graph(_sim(scores), 5)
        want = np.ones((6, 6)) - np.eye(6)
        np.testing.assert_array_equal(g.adjacency, want)

    def test_rank_invariance_under_monotone_transform(self):
        rng = np.random.default_rng(3)
        scores = _random_symmetric(rng, 9)
        g1 = knn_graph(_sim(scores), 3)
        g2 = knn_graph(_sim(2.0 * scores + 5.0), 3)
        np.testing.assert_array_equal(g1.adjacency, g2.adjacency)

    def test_k_out_of_range(self):
        m = _sim(np.zeros((4, 4)))
        with pytest.raises(InvalidInputError):
            knn_graph(m, 0)
        with pytest.raises(InvalidInputError):
            knn_graph(m, 4)


def _three_blocks(n_per=4, strong=10.0, weak=0.1):
    n = 3 * n_per
    scores = np.full((n, n), weak)
    for b in range(3):
        block = slice(b * n_per, (b + 1) * n_per)
        scores[block, block] = strong
    np.fill_diagonal(scores, 0.0)
    return scores


class TestSpectralCluster:
    def test_recovers_planted_blocks(self):
        scores = _three_blocks()
        g = knn_graph(_sim(scores), 3)
        c = spectral_cluster(g, 3, seed=0)
        want = np.repeat([0, 1, 2], 4)
        np.testing.assert_array_equal(c.labels, want)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(4)
        scores = _random_symmetric(rng, 15)
        g = knn_graph(_sim(scores), 4)
        a = spectral_cluster(g, 3, seed=11)
        b = spectral_cluster(g, 3, seed=11)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_disconnected_components_merged_by_best_score(self):
        # four cliques, no kNN edges between them; cliques A and B carry
        # the single best inter-component score, so asking for three
        # clusters must put A and B together
        n_per = 3
        scores = np.full((12, 12), 0.1)
        for b in range(4):
            block = slice(b * n_per, (b + 1) * n_per)
            scores[block, block] = 10.0
        scores[0, 3] = scores[3, 0] = 5.0  # A-B bridge score
        np.fill_diagonal(scores, 0.0)
        g = knn_graph(_sim(scores), 2)
        c = spectral_cluster(g, 3, seed=0)
        want = np.array([0, 0, 0, 0, 0, 0, 1, 1, 1, 2, 2, 2])
        np.testing.assert_array_equal(c.labels, want)

    def test_disconnected_without_scores_fails(self):
        adj = np.zeros((4, 4))
        adj[0, 1] = adj[1, 0] = 1.0
        adj[2, 3] = adj[3, 2] = 1.0
        g = AffinityGraph(adj, 1)
        with pytest.raises(InvalidInputError):
            spectral_cluster(g, 1, seed=0)

    def test_k_out_of_range(self):
        g = knn_graph(_sim(_three_blocks()), 3)
        with pytest.raises(InvalidInputError):
            spectral_cluster(g, 0, seed=0)
        with pytest.raises(InvalidInputError):
            spectral_cluster(g, 13, seed=0)

    def test_ids_travel_through(self):
        scores = _three_blocks()
        ids = tuple(f"s{i}" for i in range(12))
        g = knn_graph(_sim(scores, ids=ids), 3)
        c = spectral_cluster(g, 3, seed=0)
        assert c.ids == ids


class TestAverageLinkage:
    def test_worked_example_heights(self):
        # merge (0,1) at height 2; (2,3) at 4; the two pairs at 7.5
        D = np.array(
            [
                [0.0, 2.0, 6.0, 10.0],
                [2.0, 0.0, 5.0, 9.0],
                [6.0, 5.0, 0.0, 4.0],
                [10.0, 9.0, 4.0, 0.0],
            ]
        )
        merges = average_linkage_merges(D)
        assert merges == [(0, 1, 2.0), (2, 3, 4.0), (0, 2, 7.5)]

    def test_labels_match_reference_implementation(self):
        rng = np.random.default_rng(5)
        for trial in range(8):
            n = int(rng.integers(5, 10))
            D = _random_symmetric(rng, n, zero_diag=True)
            k = int(rng.integers(2, n))
            got = hierarchical_average_linkage(_sim(D, "dissimilarity"), k)
            want = upgma_reference_labels(D, k)
            np.testing.assert_array_equal(got.labels, want)

    def test_affine_invariance(self):
        rng = np.random.default_rng(6)
        D = _random_symmetric(rng, 8, zero_diag=True)
        shifted = 3.0 * D + 0.7
        np.fill_diagonal(shifted, 0.0)
        a = hierarchical_average_linkage(_sim(D, "dissimilarity"), 3)
        b = hierarchical_average_linkage(_sim(shifted, "dissimilarity"), 3)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_requires_dissimilarity(self):
        scores = _three_blocks()
        with pytest.raises(InvalidOrientationError):
            hierarchical_average_linkage(_sim(scores), 3)

    def test_negated_similarity_accepted(self):
        m = to_dissimilarity(_sim(_three_blocks()))
        c = hierarchical_average_linkage(m, 3)
        np.testing.assert_array_equal(c.labels, np.repeat([0, 1, 2], 4))

    def test_trivial_cuts(self):
        rng = np.random.default_rng(7)
        D = _random_symmetric(rng, 5, zero_diag=True)
        all_one = hierarchical_average_linkage(_sim(D, "dissimilarity"), 1)
        assert np.unique(all_one.labels).size == 1
        singletons = hierarchical_average_linkage(_sim(D, "dissimilarity"), 5)
        np.testing.assert_array_equal(singletons.labels, np.arange(5))

    def test_labels_numbered_by_smallest_member(self):
        # cluster containing item 0 gets label 0, and so on
        D = np.array(
            [
                [0.0, 9.0, 1.0],
                [9.0, 0.0, 8.0],
                [1.0, 8.0, 0.0],
            ]
        )
        c = hierarchical_average_linkage(_sim(D, "dissimilarity"), 2)
        np.testing.assert_array_equal(c.labels, [0, 1, 0])


class TestEndToEnd:
    def test_low_noise_gp_spectral_recovers_profiles(self):
        # full pipeline at low noise: fit, GP matrix, kNN, spectral
        courses, truth = generate(SynthConfig(noise_std=0.04, seed=3))
        model = fit_shared_hyperparams(courses, OptimizerConfig(n_restarts=3, seed=0))
        matrix = pairwise_matrix(courses, "gp", model)
        labels = spectral_cluster(knn_graph(matrix, 7), 3, seed=0)
        assert nmi(labels, truth) > 0.9
