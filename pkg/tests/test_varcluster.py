import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockbn.infotheory import DivergenceMatrix
from blockbn.varcluster import (
    agglomerate,
    complete_linkage,
    format_clustering,
    parse_clustering,
    recommend_threshold,
    threshold_grid,
)


def matrix(values):
    values = np.asarray(values, dtype=float)
    return DivergenceMatrix([f"v{i}" for i in range(len(values))], values)


def random_matrix(p, seed):
    rng = np.random.default_rng(seed)
    a = rng.random((p, p))
    a = (a + a.T) / 2
    np.fill_diagonal(a, 0)
    return matrix(a)


def block_matrix(blocks, inner=0.2, outer=0.95):
    p = sum(blocks)
    d = np.full((p, p), outer)
    start = 0
    for b in blocks:
        d[start:start + b, start:start + b] = inner
        start += b
    np.fill_diagonal(d, 0)
    return matrix(d)


def naive_complete_linkage(d, threshold):
    """Reference: full rescan of every cluster pair at each merge."""
    clusters = [[i] for i in range(len(d))]
    while len(clusters) > 1:
        best = None
        for a, b in itertools.combinations(range(len(clusters)), 2):
            link = max(d[i][j] for i in clusters[a] for j in clusters[b])
            key = (link, min(clusters[a]), min(clusters[b]))
            if best is None or key < best[0]:
                best = (key, a, b)
        (link, _, _), a, b = best
        if link > threshold + 1e-12:
            break
        clusters[a] = sorted(clusters[a] + clusters[b])
        del clusters[b]
    return sorted(clusters, key=lambda c: c[0])


def test_threshold_zero_gives_singletons():
    c = agglomerate(random_matrix(6, 0), 0.0)
    assert c.clusters == tuple((i,) for i in range(6))


def test_threshold_one_gives_single_cluster():
    c = agglomerate(random_matrix(6, 1), 1.0)
    assert c.clusters == (tuple(range(6)),)


def test_three_variable_trace():
    d = matrix([[0, 0.1, 0.9], [0.1, 0, 0.9], [0.9, 0.9, 0]])
    assert agglomerate(d, 0.5).clusters == ((0, 1), (2,))


def test_threshold_out_of_range():
    with pytest.raises(ValueError):
        agglomerate(random_matrix(3, 0), 1.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.integers(0, 10**6), st.floats(0, 1))
def test_matches_naive_reference(p, seed, t):
    d = random_matrix(p, seed)
    assert [list(c) for c in agglomerate(d, t).clusters] == naive_complete_linkage(d.values, t)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10**6))
def test_reference_agrees_with_ties(p, seed):
    # coarse values force many equal linkage heights
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 4, (p, p)) / 4
    a = np.maximum(a, a.T)
    np.fill_diagonal(a, 0)
    for t in (0.25, 0.5, 0.75):
        assert [list(c) for c in complete_linkage(a, t)] == naive_complete_linkage(a, t)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(0, 10**6))
def test_partition_monotone_and_diameter(p, seed):
    d = random_matrix(p, seed)
    prev = p + 1
    for t in np.linspace(0, 1, 11):
        c = agglomerate(d, float(t))
        flat = sorted(i for cl in c.clusters for i in cl)
        assert flat == list(range(p))
        assert [cl[0] for cl in c.clusters] == sorted(cl[0] for cl in c.clusters)
        for cl in c.clusters:
            assert list(cl) == sorted(cl)
            if len(cl) > 1:
                assert d.values[np.ix_(cl, cl)].max() <= t + 1e-12
        assert c.n_clusters <= prev
        prev = c.n_clusters


def test_grid():
    assert threshold_grid(0.1) == pytest.approx([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    assert len(threshold_grid(0.1)) == 9
    assert threshold_grid(0.5) == [0.5]
    assert threshold_grid(0.25) == [0.25, 0.5, 0.75]
    with pytest.raises(ValueError):
        threshold_grid(1.0)


def test_recommend_block_diagonal():
    d = block_matrix([3, 3, 3], inner=0.3)
    t, c = recommend_threshold(d, [0.1, 0.4])
    assert t == 0.4
    assert c.clusters == ((0, 1, 2), (3, 4, 5), (6, 7, 8))
    assert agglomerate(d, 0.1).n_clusters == 9


def test_recommend_all_ones_picks_smallest():
    d = matrix(np.ones((5, 5)) - np.eye(5))
    t, c = recommend_threshold(d, threshold_grid(0.1))
    assert t == pytest.approx(0.1)
    assert c.n_clusters == 5


def test_recommend_single_variable():
    t, c = recommend_threshold(matrix([[0.0]]), threshold_grid(0.1))
    assert c.clusters == ((0,),)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 10**6))
def test_recommend_objective_is_minimal(p, seed):
    d = random_matrix(p, seed)
    grid = threshold_grid(0.1)
    t, c = recommend_threshold(d, grid)
    best = max(c.n_clusters, c.largest)
    for g in grid:
        other = agglomerate(d, g)
        assert best <= max(other.n_clusters, other.largest)


def test_recommend_parallel_same():
    d = random_matrix(10, 3)
    assert recommend_threshold(d, threshold_grid(0.1)) == recommend_threshold(d, threshold_grid(0.1), workers=3)


def test_clustering_text_round_trip():
    c = agglomerate(block_matrix([2, 3]), 0.5)
    text = format_clustering(c)
    assert text == "0: v0,v1\n1: v2,v3,v4\n"
    assert parse_clustering(text, list(c.names)).clusters == c.clusters
