import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irdrop.exceptions import ValidationError
from irdrop.graph import build_graph, degree_rank, manhattan, normalized_adjacency, save_graph_json


def brute_edges(coords, t):
    return {(i, j) for i, j in itertools.combinations(range(len(coords)), 2) if manhattan(coords[i], coords[j]) <= t}


def test_manhattan_examples():
    assert manhattan((0, 0), (3, 4)) == 7
    assert manhattan((1.5, 2.5), (1.5, 2.5)) == 0
    assert np.isclose(manhattan((0.3, 0.7), (0.5, 0.1)), 0.8)


def test_small_example_and_extremes():
    coords = np.array([(0, 0), (0, 2), (5, 5)], dtype=float)
    g = build_graph(coords, 3)
    assert g.edge_set() == {(0, 1)}
    assert g.edge_dist.tolist() == [2.0]
    np.testing.assert_allclose(g.edge_feature, [2 / 3])
    assert build_graph(coords, 1.9).n_edges == 0
    assert build_graph(coords, 10).n_edges == 3


def test_threshold_must_be_positive():
    with pytest.raises(ValidationError):
        build_graph(np.zeros((2, 2)), 0.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(0, 120))
def test_matches_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    coords = np.round(rng.uniform(0, 10, size=(n, 2)), 1)
    t = float(rng.uniform(0.2, 4))
    g = build_graph(coords, t)
    assert g.edge_set() == brute_edges(coords, t)
    assert np.all(g.edges[:, 0] < g.edges[:, 1])
    assert np.all(g.edge_dist <= t)
    assert sorted(g.edges.tolist()) == g.edges.tolist()


def test_degree_rank_examples():
    path = build_graph(np.array([(0, 0), (1, 0), (2, 0)], float), 1.0)
    assert degree_rank(path).degrees.tolist() == [2, 1, 1]
    assert degree_rank(build_graph(np.array([(0, 0), (9, 9)], float), 1.0)).degrees.tolist() == [0, 0]
    k4 = build_graph(np.array([(0, 0), (1, 0), (0, 1), (1, 1)], float), 2.0)
    assert degree_rank(k4).degrees.tolist() == [3, 3, 3, 3]


def test_degree_rank_csv(tmp_path):
    g = build_graph(np.array([(0, 0), (1, 0), (2, 0)], float), 1.0)
    degree_rank(g).to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == "rank,degree\n1,2\n2,1\n3,1\n"


def test_normalized_adjacency_examples():
    assert normalized_adjacency(build_graph(np.zeros((1, 2)), 1.0)).toarray().tolist() == [[1.0]]
    two = normalized_adjacency(build_graph(np.array([(0, 0), (1, 0)], float), 1.0)).toarray()
    np.testing.assert_allclose(two, 0.5)


def test_normalized_adjacency_dense_reference():
    rng = np.random.default_rng(5)
    g = build_graph(rng.uniform(0, 3, size=(5, 2)), 1.5)
    a = np.zeros((5, 5))
    for u, v in g.edges:
        a[u, v] = a[v, u] = 1
    a += np.eye(5)
    d = np.diag(1 / np.sqrt(a.sum(1)))
    got = normalized_adjacency(g).toarray()
    np.testing.assert_allclose(got, d @ a @ d, atol=1e-15)
    np.testing.assert_array_equal(got, got.T)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_invariants(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 80))
    coords = rng.uniform(0, 10, size=(n, 2))
    t1, t2 = sorted(rng.uniform(0.1, 5, size=2))
    g1, g2 = build_graph(coords, t1), build_graph(coords, t2)
    assert g1.edge_set() <= g2.edge_set()
    assert degree_rank(g2).degrees.sum() == 2 * g2.n_edges
    assert np.all(np.diff(degree_rank(g2).degrees) <= 0)
    # rebuilding from shuffled records gives the relabelled graph
    perm = rng.permutation(n)
    shuffled = build_graph(coords[perm], t2)
    assert shuffled.edge_set() == g2.permuted(perm).edge_set()


def test_dataset_source_and_partial_labels(small_dataset):
    from irdrop.data import Dataset
    from dataclasses import replace as dc_replace

    recs = list(small_dataset.records)
    recs[0] = dc_replace(recs[0], ir_drop_mv=None)
    g = build_graph(Dataset(recs), 3.0)
    assert g.node_ids.tolist() == list(range(30))
    assert np.isnan(g.labels[0]) and np.isfinite(g.labels[1:]).all()


def test_json_export(tmp_path):
    g = build_graph(np.array([(0, 0), (1, 0)], float), 2.0)
    save_graph_json(g, tmp_path / "g.json")
    d = json.loads((tmp_path / "g.json").read_text())
    assert d["edges"] == [[0, 1]] and d["edge_dist_um"] == [1.0] and d["threshold_um"] == 2.0
