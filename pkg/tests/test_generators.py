import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hmmlab.errors import InvalidSpec
from hmmlab.generators import (
    CycleMixture,
    CyclePermutation,
    DeBruijn,
    DegreeMixture,
    DenseRandom,
    DeterministicRandomLabels,
    Factorial,
    Identity,
    RandomSupport,
    RegularDigraph,
    UnionOfCycles,
    de_bruijn_sequence,
    make_observation,
    make_transition,
    random_regular_graph,
    regular_graph_walk,
    spec_from_dict,
    spec_to_dict,
)
from hmmlab.hmm import Hmm, likelihood_matrix, validate

TRANSITIONS = [
    CyclePermutation(6),
    UnionOfCycles(6, 3),
    CycleMixture(6, 2, 0.3),
    DegreeMixture(8, 3, 0.2, seed=1),
    RegularDigraph(7, 3, seed=2),
    Identity(4),
    Factorial(CyclePermutation(2), CycleMixture(3, 3, 0.0)),
]
OBSERVATIONS = [
    RandomSupport(6, 4, 2, seed=0),
    RandomSupport(6, 4, 4, seed=0, weights="equal"),
    DeterministicRandomLabels(6, 3, seed=1),
    DeBruijn(8, 2),
    DenseRandom(6, 3, seed=2),
]


def cyclic_substrings(seq, j):
    n = len(seq)
    return [tuple(seq[(i + s) % n] for s in range(j)) for i in range(n)]


@pytest.mark.parametrize("spec", TRANSITIONS, ids=lambda s: type(s).__name__)
def test_transitions_validate(spec):
    T = make_transition(spec)
    assert validate(Hmm(T, np.full((1, T.shape[0]), 1.0))) == []


@pytest.mark.parametrize("spec", OBSERVATIONS, ids=lambda s: type(s).__name__)
def test_observations_validate(spec):
    O = make_observation(spec)
    assert O.shape == (spec.m, spec.n)
    assert validate(Hmm(np.eye(spec.n), O)) == []


@pytest.mark.parametrize("spec", TRANSITIONS + OBSERVATIONS, ids=lambda s: type(s).__name__)
def test_spec_json_roundtrip(spec):
    back = spec_from_dict(json.loads(json.dumps(spec_to_dict(spec))))
    assert back == spec


def test_unknown_spec_kind():
    with pytest.raises(InvalidSpec):
        spec_from_dict({"kind": "Nope"})


def test_cycle_shift():
    T = make_transition(CyclePermutation(4))
    expected = np.array([[0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]])
    np.testing.assert_array_equal(T, expected)


def test_mixture_with_zero_eps_is_cycle():
    np.testing.assert_array_equal(make_transition(CycleMixture(8, 2, 0.0)), make_transition(CyclePermutation(8)))


@pytest.mark.parametrize("n,c", [(6, 2), (6, 3), (12, 4), (20, 4), (5, 5)])
def test_union_of_cycles_order(n, c):
    T = make_transition(UnionOfCycles(n, c))
    np.testing.assert_array_equal(np.linalg.matrix_power(T, c), np.eye(n))
    for p in range(1, c):
        assert not np.array_equal(np.linalg.matrix_power(T, p), np.eye(n))


@pytest.mark.parametrize(
    "spec",
    [UnionOfCycles(6, 4), CycleMixture(6, 4, 0.1), CycleMixture(6, 3, 1.5), DegreeMixture(8, 4, 0.3), RegularDigraph(4, 4)],
    ids=str,
)
def test_invalid_transition_specs(spec):
    with pytest.raises(InvalidSpec):
        make_transition(spec)


@pytest.mark.parametrize("seed", range(5))
def test_regular_digraph_columns(seed):
    n, d = 9, 3
    T = make_transition(RegularDigraph(n, d, seed=seed))
    for j in range(n):
        nz = np.flatnonzero(T[:, j])
        assert nz.size == d and j not in nz
        np.testing.assert_allclose(T[nz, j], 1 / d)


def test_degree_mixture_mass_outside_neighbours():
    n, d, eps = 16, 3, 0.1
    T = make_transition(DegreeMixture(n, d, eps, seed=4))
    srt = -np.sort(-T, axis=0)
    assert srt[d + 2 :].sum(axis=0).max() <= 1e-15
    np.testing.assert_allclose(T.sum(axis=0), 1)


class TestFactorial:
    def test_kronecker_layout(self):
        T1 = np.array([[0.9, 0.3], [0.1, 0.7]])
        T2 = make_transition(CyclePermutation(3))
        T = make_transition(Factorial(CyclePermutation(2), CyclePermutation(3)))
        np.testing.assert_array_equal(T, np.kron(make_transition(CyclePermutation(2)), T2))
        # state (i, j) -> i * n2 + j
        K = np.kron(T1, T2)
        assert K[1 * 3 + 2, 0 * 3 + 1] == T1[1, 0] * T2[2, 1]

    @pytest.mark.parametrize("seed", range(5))
    def test_singular_values_multiply(self, seed):
        gen = np.random.default_rng(seed)
        T1, T2 = gen.dirichlet(np.ones(3), size=3).T, gen.dirichlet(np.ones(2), size=2).T
        s = np.linalg.svd(np.kron(T1, T2), compute_uv=False)
        pairs = np.sort(np.outer(np.linalg.svd(T1, compute_uv=False), np.linalg.svd(T2, compute_uv=False)).ravel())
        np.testing.assert_allclose(np.sort(s), pairs, atol=1e-12)


class TestObservations:
    def test_equal_weights_with_k_equal_m(self):
        np.testing.assert_allclose(make_observation(RandomSupport(5, 3, 3, weights="equal")), np.full((3, 5), 1 / 3))

    @pytest.mark.parametrize("weights", ["dirichlet", "equal"])
    def test_support_size(self, weights):
        O = make_observation(RandomSupport(50, 8, 2, seed=1, weights=weights))
        assert np.all((O > 0).sum(axis=0) == 2)
        if weights == "equal":
            assert set(np.unique(O[O > 0])) == {0.5}

    def test_dirichlet_support_columns_are_distinct(self):
        O = make_observation(RandomSupport(16, 3, 2, seed=0))
        U = O / np.linalg.norm(O, axis=0)
        G = U.T @ U
        assert np.max(G[np.triu_indices(16, 1)]) < 1 - 1e-12

    def test_labels_one_hot(self):
        O = make_observation(DeterministicRandomLabels(20, 4, seed=3))
        assert np.all((O == 1).sum(axis=0) == 1) and O.sum() == 20

    def test_invalid(self):
        with pytest.raises(InvalidSpec):
            make_observation(RandomSupport(4, 2, 3))
        with pytest.raises(InvalidSpec):
            make_observation(RandomSupport(4, 2, 2, weights="skewed"))
        with pytest.raises(InvalidSpec):
            make_observation(DeBruijn(12, 2))

    def test_reproducible(self):
        spec = RandomSupport(10, 4, 2, seed=5)
        np.testing.assert_array_equal(make_observation(spec), make_observation(spec))

    def test_de_bruijn_labels_unique_windows(self):
        O = make_observation(DeBruijn(8, 2))
        labels = O.argmax(axis=0).tolist()
        assert len(set(cyclic_substrings(labels, 3))) == 8

    @pytest.mark.parametrize("m,j", [(2, 2), (2, 4), (3, 2), (4, 2)])
    def test_de_bruijn_on_cycle_gives_one_hot_full_rank_A(self, m, j):
        n = m**j
        A = likelihood_matrix(Hmm(make_transition(CyclePermutation(n)), make_observation(DeBruijn(n, m))), j)
        assert np.all((A == 0) | (A == 1))
        assert len({int(np.flatnonzero(A[:, i])[0]) for i in range(n)}) == n


class TestDeBruijnSequence:
    def test_trivial(self):
        assert de_bruijn_sequence(2, 1) == [0, 1]

    @pytest.mark.parametrize("m,j", [(2, 3), (3, 2), (2, 5), (3, 3), (4, 2), (5, 2)])
    def test_all_substrings_once(self, m, j):
        seq = de_bruijn_sequence(m, j)
        assert len(seq) == m**j
        subs = cyclic_substrings(seq, j)
        assert len(set(subs)) == m**j
        assert all(0 <= x < m for x in seq)

    @given(st.integers(2, 4), st.integers(1, 4))
    @settings(max_examples=20, deadline=None)
    def test_property(self, m, j):
        seq = de_bruijn_sequence(m, j)
        assert sorted(cyclic_substrings(seq, j)) == sorted(set(cyclic_substrings(seq, j)))
        assert len(seq) == m**j

    def test_invalid(self):
        with pytest.raises(InvalidSpec):
            de_bruijn_sequence(1, 3)


class TestRegularGraphs:
    @pytest.mark.parametrize("n,d", [(10, 3), (100, 16), (50, 4)])
    def test_walk_is_symmetric_doubly_stochastic(self, n, d):
        T = regular_graph_walk(n, d, seed=1)
        np.testing.assert_array_equal(T, T.T)
        np.testing.assert_allclose(T.sum(axis=0), 1)
        assert np.all(np.diag(T) == 0)
        assert np.all((T > 0).sum(axis=0) == d)

    def test_connected_and_reproducible(self):
        import networkx as nx

        G = random_regular_graph(30, 3, seed=2)
        assert nx.is_connected(G)
        assert sorted(G.edges) == sorted(random_regular_graph(30, 3, seed=2).edges)

    @pytest.mark.parametrize("n,d", [(5, 3), (4, 4)])
    def test_impossible(self, n, d):
        with pytest.raises(InvalidSpec):
            random_regular_graph(n, d, seed=0)
