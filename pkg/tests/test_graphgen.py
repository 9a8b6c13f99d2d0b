import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsdetect import data, graphgen

PATH_TOPOLOGY = data.parse_topology(
    "sensor A flow\nsensor B flow\nsensor C level\nedge A B\nedge B C\n")


class TestTypeEmbeddings:
    def test_singleton_type_is_verbatim(self):
        u = np.array([[1.0, 2.0], [3.0, 4.0], [9.0, 9.0]])
        out = graphgen.type_embeddings(u, PATH_TOPOLOGY)
        np.testing.assert_array_equal(out[1], [9.0, 9.0])

    def test_two_sensor_mean(self):
        u = np.array([[1.0, 2.0], [3.0, 4.0], [0.0, 0.0]])
        out = graphgen.type_embeddings(u, PATH_TOPOLOGY)
        np.testing.assert_array_equal(out[0], [2.0, 3.0])

    def test_matches_group_by_mean_oracle(self):
        rng = np.random.default_rng(0)
        topology = data.generate_topology(9, 3, 0.3, rng)
        u = rng.normal(size=(9, 5))
        out = graphgen.type_embeddings(u, topology)
        for tau in range(3):
            members = [i for i in range(9) if topology.type_of[i] == tau]
            np.testing.assert_allclose(out[tau],
                                       np.mean([u[i] for i in members], axis=0))


class TestTypeSimilarity:
    def test_identical_rows(self):
        sim = graphgen.type_similarity(np.array([[1.0, 2.0], [1.0, 2.0]]))
        np.testing.assert_allclose(sim.matrix, np.ones((2, 2)))

    def test_orthogonal_rows(self):
        sim = graphgen.type_similarity(np.array([[1.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_allclose(sim.matrix, np.eye(2))

    def test_closed_form_cosine(self):
        sim = graphgen.type_similarity(np.array([[1.0, 1.0], [1.0, 0.0]]))
        assert sim.matrix[0, 1] == pytest.approx(1.0 / math.sqrt(2.0))

    def test_zero_norm_row_warns_and_degrades(self):
        with pytest.warns(RuntimeWarning, match="zero-norm"):
            sim = graphgen.type_similarity(np.array([[0.0, 0.0], [1.0, 2.0]]))
        assert sim.matrix[0, 0] == 1.0
        assert sim.matrix[0, 1] == 0.0
        assert sim.matrix[1, 0] == 0.0

    @given(st.integers(0, 1000))
    @settings(max_examples=30)
    def test_symmetric_unit_diagonal_bounded(self, seed):
        rng = np.random.default_rng(seed)
        emb = rng.normal(size=(4, 6))
        sim = graphgen.type_similarity(emb).matrix
        np.testing.assert_allclose(sim, sim.T)
        np.testing.assert_allclose(np.diag(sim), 1.0)
        assert (np.abs(sim) <= 1.0).all()

    def test_scale_invariance_is_exact_for_binary_powers(self):
        rng = np.random.default_rng(7)
        emb = rng.normal(size=(3, 5))
        base = graphgen.type_similarity(emb).matrix
        for alpha in (0.5, 2.0, 4.0, 1024.0):
            scaled = graphgen.type_similarity(alpha * emb).matrix
            np.testing.assert_array_equal(scaled, base)

    def test_scale_invariance_near_exact_for_general_scalars(self):
        rng = np.random.default_rng(8)
        emb = rng.normal(size=(3, 5))
        base = graphgen.type_similarity(emb).matrix
        scaled = graphgen.type_similarity(3.7 * emb).matrix
        np.testing.assert_allclose(scaled, base, atol=1e-12)


class TestExpandSimilarity:
    def test_single_type_gives_all_ones(self):
        topology = data.parse_topology("sensor A x\nsensor B x\nedge A B\n")
        sim = graphgen.type_similarity(np.array([[1.0, 1.0]]))
        np.testing.assert_array_equal(
            graphgen.expand_similarity(sim, topology), np.ones((2, 2)))

    def test_two_types_direct_mapping(self):
        topology = data.parse_topology("sensor A x\nsensor B y\nedge A B\n")
        sim = graphgen.TypeSimilarity(
            np.array([[1.0, 0.5], [0.5, 1.0]]), np.zeros((2, 2)))
        np.testing.assert_array_equal(
            graphgen.expand_similarity(sim, topology),
            [[1.0, 0.5], [0.5, 1.0]])

    def test_matches_index_lookup_oracle(self):
        rng = np.random.default_rng(1)
        topology = data.generate_topology(7, 3, 0.3, rng)
        c = rng.uniform(-1.0, 1.0, size=(3, 3))
        c = (c + c.T) / 2.0
        sim = graphgen.TypeSimilarity(c, np.zeros((3, 3)))
        out = graphgen.expand_similarity(sim, topology)
        for i in range(7):
            for j in range(7):
                assert out[i, j] == c[topology.type_of[i], topology.type_of[j]]


class TestBuildGraph:
    def test_all_ones_similarity_is_noop(self):
        a = PATH_TOPOLOGY.adjacency.astype(float)
        g = graphgen.build_graph(a, np.ones((3, 3)), np.zeros((3, 2)))
        np.testing.assert_array_equal(g.adjacency, a)

    def test_empty_adjacency_stays_empty(self):
        g = graphgen.build_graph(np.zeros((3, 3)),
                                 np.full((3, 3), 0.9), np.zeros((3, 2)))
        np.testing.assert_array_equal(g.adjacency, 0.0)

    def test_hand_path_graph(self):
        # Types are (flow, flow, level); put similarity 0.5 across the pair.
        c = np.array([[1.0, 0.5], [0.5, 1.0]])
        sim = graphgen.TypeSimilarity(c, np.zeros((2, 2)))
        expanded = graphgen.expand_similarity(sim, PATH_TOPOLOGY)
        g = graphgen.build_graph(PATH_TOPOLOGY.adjacency.astype(float),
                                 expanded, np.zeros((3, 2)))
        np.testing.assert_array_equal(
            g.adjacency, [[0.0, 1.0, 0.0], [1.0, 0.0, 0.5], [0.0, 0.5, 0.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="similarity"):
            graphgen.build_graph(np.zeros((3, 3)), np.zeros((2, 2)),
                                 np.zeros((3, 2)))
        with pytest.raises(ValueError, match="nodes"):
            graphgen.build_graph(np.zeros((3, 3)), np.zeros((3, 3)),
                                 np.zeros((2, 2)))


class TestWeightedGraph:
    @given(st.integers(0, 1000))
    @settings(max_examples=30)
    def test_support_symmetry_and_range(self, seed):
        rng = np.random.default_rng(seed)
        topology = data.generate_topology(8, 3, 0.4, rng)
        attrs = rng.normal(size=(8, 6))
        g = graphgen.weighted_graph(topology, attrs)
        support = g.adjacency != 0.0
        assert not support[topology.adjacency == 0].any()
        np.testing.assert_allclose(g.adjacency, g.adjacency.T)
        assert (np.abs(g.adjacency) <= 1.0).all()

    def test_weighting_off_returns_binary_adjacency(self):
        attrs = np.random.default_rng(2).normal(size=(3, 4))
        g = graphgen.weighted_graph(PATH_TOPOLOGY, attrs, weighting=False)
        np.testing.assert_array_equal(g.adjacency, PATH_TOPOLOGY.adjacency)
        np.testing.assert_array_equal(g.attributes, attrs)

    def test_different_attributes_give_different_weights(self):
        rng = np.random.default_rng(3)
        a1 = graphgen.weighted_graph(PATH_TOPOLOGY, rng.normal(size=(3, 4)))
        a2 = graphgen.weighted_graph(PATH_TOPOLOGY, rng.normal(size=(3, 4)))
        assert not np.array_equal(a1.adjacency, a2.adjacency)
