import math

import numpy as np
import pytest

from lieicp.spatial import (SpatialIndex, build_index, nearest, neighbor_count, neighborhoods,
                            sigma_from_farthest)


def brute_knn(P, q, k, skip=None):
    """Double-loop oracle: ascending distance, smaller index first on ties."""
    cand = []
    for i, p in enumerate(P):
        if i == skip:
            continue
        acc = 0.0
        for a, b in zip(p, q):
            acc += (float(a) - float(b)) * (float(a) - float(b))
        d = math.sqrt(acc)
        cand.append((d, i))
    cand.sort()
    return [i for _, i in cand[:k]], [d for d, _ in cand[:k]]


def test_nearest_trivial():
    idx = build_index([[0, 0, 0], [1, 0, 0], [5, 5, 5]])
    assert nearest(idx, [0.9, 0, 0]) == (1, pytest.approx(0.1))


def test_tie_goes_to_smaller_index():
    P = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0]])
    assert SpatialIndex(P).nearest([0, 0, 0])[0] == 0


@pytest.mark.parametrize("n", [20, 300])
def test_knn_matches_exhaustive_scan(n, rng):
    P = rng.normal(size=(n, 3))
    P[5] = P[3]  # exact duplicate: ties
    P[7] = P[3]
    idx = SpatialIndex(P)
    Q = np.vstack([rng.normal(size=(30, 3)), P[:10]])
    k = 6
    got_i, got_d = idx.knn(Q, k)
    for r, q in enumerate(Q):
        ei, ed = brute_knn(P, q, k)
        assert got_i[r].tolist() == ei
        assert np.array_equal(got_d[r], ed)


def test_knn_exclude(rng):
    P = rng.normal(size=(100, 3))
    gi, _ = SpatialIndex(P).knn(P, 4, exclude=np.arange(100))
    for i in range(100):
        assert gi[i].tolist() == brute_knn(P, P[i], 4, skip=i)[0]


def test_grid_ties(rng):
    g = np.arange(6.0)
    P = np.array(np.meshgrid(g, g, g, indexing="ij")).reshape(3, -1).T
    gi, _ = SpatialIndex(P).knn(P, 6, exclude=np.arange(len(P)))
    for i in rng.choice(len(P), 40, replace=False):
        assert gi[i].tolist() == brute_knn(P, P[i], 6, skip=i)[0]


def test_neighbor_count():
    assert neighbor_count(894, 10) == math.ceil(0.1 * 893)
    assert neighbor_count(101, 10) == 10
    assert neighbor_count(11, 100) == 10
    with pytest.raises(ValueError):
        neighbor_count(1, 50)
    with pytest.raises(ValueError):
        neighbor_count(5, 0)


def test_sigma_gives_one_percent_at_farthest():
    s = sigma_from_farthest(0.7)
    assert math.exp(-0.49 / s**2) == pytest.approx(0.01, rel=1e-12)


def test_neighborhoods_exclude_self(rng):
    P = rng.normal(size=(50, 3))
    lists = neighborhoods(P, 10)
    for nl in lists:
        assert nl.center_index not in nl.neighbor_indices.tolist()
        assert len(nl.neighbor_indices) == 5
        assert nl.sigma == sigma_from_farthest(nl.distances[-1])


def test_empty_index_rejected():
    with pytest.raises(ValueError):
        SpatialIndex(np.zeros((0, 3)))
