import itertools
import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windstgnn.data import fit_normalizer, make_split
from windstgnn.graphs import (
    AdjacencyGraph,
    GraphError,
    directed_knn,
    dtw_distance,
    dtw_source_series,
    geographic_graph,
    pairwise_dtw,
    semantic_graph,
    sym_normalize,
)


def dtw_oracle(a, b, band=None):
    """Top-down memoised recursion over the full table."""
    @lru_cache(maxsize=None)
    def d(i, j):
        if band is not None and abs(i - j) > band:
            return math.inf
        c = abs(a[i] - b[j])
        if i == 0 and j == 0:
            return c
        options = []
        if i > 0:
            options.append(d(i - 1, j))
        if j > 0:
            options.append(d(i, j - 1))
        if i > 0 and j > 0:
            options.append(d(i - 1, j - 1))
        return c + min(options)

    return d(len(a) - 1, len(b) - 1)


def warping_paths(la, lb):
    """Every monotone path from (0, 0) to (la-1, lb-1) with unit steps."""
    def walk(i, j):
        if (i, j) == (la - 1, lb - 1):
            yield [(i, j)]
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < la and j + dj < lb:
                for rest in walk(i + di, j + dj):
                    yield [(i, j)] + rest

    return walk(0, 0)


def dtw_by_paths(a, b):
    return min(sum(abs(a[i] - b[j]) for i, j in p) for p in warping_paths(len(a), len(b)))


# -- DTW ---------------------------------------------------------------------

def test_dtw_examples():
    assert dtw_distance([0, 0, 0], [1, 1, 1]) == 3 == dtw_oracle((0, 0, 0), (1, 1, 1))
    assert dtw_distance([1, 2, 3], [1, 2, 2, 3]) == 0 == dtw_by_paths([1, 2, 3], [1, 2, 2, 3])


def test_dtw_empty_rejected():
    with pytest.raises(ValueError):
        dtw_distance([], [1.0])


def test_dtw_band_narrower_than_length_gap():
    with pytest.raises(ValueError):
        dtw_distance([1, 2, 3, 4], [1, 2], band=1)


ints = st.lists(st.integers(-20, 20), min_size=1, max_size=12)


@settings(max_examples=200, deadline=None)
@given(ints, ints)
def test_dtw_matches_oracle_and_is_symmetric(a, b):
    d = dtw_distance(a, b)
    assert d == dtw_oracle(tuple(a), tuple(b))
    assert d == dtw_distance(b, a)
    assert d >= 0
    assert dtw_distance(a, a) == 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=4), st.lists(st.integers(-5, 5), min_size=1, max_size=4))
def test_dtw_matches_path_enumeration(a, b):
    assert dtw_distance(a, b) == dtw_by_paths(a, b)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10), st.integers(0, 4), st.integers(0, 2**31 - 1))
def test_dtw_band_matches_oracle(length, band, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.integers(-9, 9, length), rng.integers(-9, 9, length)
    assert dtw_distance(a, b, band) == dtw_oracle(tuple(a.tolist()), tuple(b.tolist()), band)
    assert dtw_distance(a, b, band) >= dtw_distance(a, b)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(1, 15), st.sampled_from([None, 0, 2]), st.integers(0, 2**31 - 1))
def test_pairwise_matches_scalar(n, length, band, seed):
    series = np.random.default_rng(seed).integers(-10, 10, (n, length)).astype(float)
    d = pairwise_dtw(series, band)
    for i, j in itertools.combinations(range(n), 2):
        assert d[i, j] == d[j, i] == dtw_distance(series[i], series[j], band)
    assert (np.diag(d) == 0).all()


# -- semantic graph ----------------------------------------------------------

def test_identical_series_tie_break():
    series = np.ones((3, 5))
    directed = directed_knn(pairwise_dtw(series), 1)
    np.testing.assert_array_equal(directed, [[0, 1, 0], [1, 0, 0], [1, 0, 0]])
    # rows 1 and 2 both pick turbine 0, so the OR leaves 1-2 unconnected
    g = semantic_graph(series, 1)
    np.testing.assert_array_equal(g.matrix, [[0, 1, 1], [1, 0, 0], [1, 0, 0]])
    np.testing.assert_array_equal(semantic_graph(series, 2).matrix, np.ones((3, 3)) - np.eye(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 8), st.integers(0, 2**31 - 1), st.data())
def test_semantic_graph_properties(n, seed, data):
    m = data.draw(st.integers(1, n - 1))
    series = np.random.default_rng(seed).normal(size=(n, 6))
    d = pairwise_dtw(series)
    assert (directed_knn(d, m).sum(axis=1) == m).all()
    a = semantic_graph(series, m, distances=d).matrix
    assert set(np.unique(a)) <= {0.0, 1.0}
    assert (np.diag(a) == 0).all() and (a == a.T).all()
    if m == n - 1:
        np.testing.assert_array_equal(a, np.ones((n, n)) - np.eye(n))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 7), st.integers(0, 2**31 - 1), st.data())
def test_semantic_graph_permutation_equivariant(n, seed, data):
    rng = np.random.default_rng(seed)
    series = rng.normal(size=(n, 5))    # continuous values: no distance ties
    m = data.draw(st.integers(1, n - 1))
    perm = rng.permutation(n)
    a = semantic_graph(series, m).matrix
    b = semantic_graph(series[perm], m).matrix
    np.testing.assert_array_equal(b, a[np.ix_(perm, perm)])


def test_semantic_graph_needs_m_below_n():
    with pytest.raises(GraphError):
        semantic_graph(np.zeros((3, 4)), 3)


def test_dtw_source_series_daily_means(synth_ds):
    split = make_split("holdout", synth_ds.n_days)[0]
    norm = fit_normalizer(synth_ds, split.train_segments)
    series = dtw_source_series(synth_ds, norm, split.train_segments)
    assert series.shape == (8, 26)
    z = norm.apply_patv(synth_ds.features[144:288, 3, 4])
    assert series[3, 1] == pytest.approx(z.mean(), abs=1e-12)


# -- geographic graph --------------------------------------------------------

def test_colocated_pair_connects():
    coords = np.array([[0.0, 0.0], [0.0, 0.0], [100.0, 0.0], [300.0, 50.0]])
    a = geographic_graph(coords).matrix
    assert a[0, 1] == a[1, 0] == 1.0
    assert (np.diag(a) == 0).all()


def test_cut_radius():
    base = np.array([[0.0, 0.0], [1000.0, 0.0], [0.0, 1000.0], [1000.0, 1000.0]])
    coords = np.vstack([base, [[1.0, 1.0]]])
    iu = np.triu_indices(5, 1)
    dist = np.linalg.norm(coords[:, None] - coords[None], axis=-1)
    sigma = np.std(dist[iu])
    radius = sigma * math.sqrt(-math.log(0.8))
    a = geographic_graph(coords).matrix
    np.testing.assert_array_equal(a, ((dist <= radius) & ~np.eye(5, dtype=bool)).astype(float))
    assert ((dist[iu] - radius) != 0).all()
    inside = np.exp(-(radius * (1 - 1e-9)) ** 2 / sigma**2) >= 0.8
    outside = np.exp(-(radius * (1 + 1e-9)) ** 2 / sigma**2) >= 0.8
    assert inside and not outside


def test_two_points_deterministic():
    a1 = geographic_graph(np.array([[0.0, 0.0], [5.0, 0.0]])).matrix
    a2 = geographic_graph(np.array([[0.0, 0.0], [5.0, 0.0]])).matrix
    np.testing.assert_array_equal(a1, a2)
    assert (a1 == a1.T).all() and (np.diag(a1) == 0).all()


def test_identical_coordinates_rejected():
    with pytest.raises(GraphError):
        geographic_graph(np.ones((4, 2)))


@pytest.mark.parametrize("seed", range(10))
def test_geographic_rigid_motion_invariance(seed):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, 3000, (12, 2))
    theta = rng.uniform(0, 2 * np.pi)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    moved = coords @ rot.T + rng.uniform(-1e4, 1e4, 2)
    a = geographic_graph(coords).matrix
    np.testing.assert_array_equal(a, geographic_graph(moved).matrix)
    assert (a == a.T).all()


# -- normalisation -----------------------------------------------------------

def test_sym_normalize_examples():
    two = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(sym_normalize(two), two)
    np.testing.assert_array_equal(sym_normalize(np.eye(3)), np.eye(3))
    iso = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    out = sym_normalize(iso)
    assert np.isfinite(out).all() and (out[2] == 0).all() and (out[:, 2] == 0).all()


def power_iteration(m, iters=500):
    v = np.random.default_rng(0).normal(size=m.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = m @ v
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        lam, v = nrm / np.linalg.norm(v), w / nrm
    return lam


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.integers(0, 2**31 - 1))
def test_spectral_radius_at_most_one(n, seed):
    rng = np.random.default_rng(seed)
    a = np.triu((rng.random((n, n)) < 0.5).astype(float), 1)
    a = a + a.T
    out = sym_normalize(a)
    assert power_iteration(out) <= 1 + 1e-9
    assert (out == out.T).all()


# -- persistence -------------------------------------------------------------

def test_graph_text_roundtrip(tmp_path):
    g = geographic_graph(np.random.default_rng(3).uniform(0, 500, (6, 2)))
    g.save(tmp_path / "g.txt")
    back = AdjacencyGraph.load(tmp_path / "g.txt")
    assert back.kind == "geographic" and back.params == g.params
    assert back.matrix.tobytes() == g.matrix.tobytes()
    assert (tmp_path / "g.txt").read_text().splitlines()[0].startswith("geographic 6 eps=0.8 sigma=")
