import math
from fractions import Fraction

import numpy as np
import pytest

from lieicp.matching import (MatchSet, closest_point, ctsf_matching, ctsf_trimmed, lie_matching, lie_scores,
                             shape_matching, trim)
from lieicp.similarity import DescriptorSet
from lieicp.spatial import SpatialIndex


def dist(a, b):
    return math.sqrt(sq(a, b))


def sq(a, b):
    # left-to-right products: builtin sum() is compensated on 3.12+ and ** goes through pow()
    acc = 0.0
    for x, y in zip(a, b):
        d = float(x) - float(y)
        acc += d * d
    return acc


def argmin_loop(n, score):
    best, arg = math.inf, -1
    for i in range(n):
        s = score(i)
        if s < best:
            best, arg = s, i
    return arg, best


def oracle_trim(pairs, tau):
    keep = math.ceil(len(pairs) * (1 - Fraction(str(tau))))
    return sorted(pairs, key=lambda r: (r[2], r[0], r[1]))[:keep]


def fake_descriptors(rng, n, ties=True):
    ev = np.round(rng.uniform(0, 1, (n, 3)), 1)  # coarse values force shape ties
    if not ties:
        ev = rng.uniform(0, 1, (n, 3))
    return DescriptorSet(np.sort(ev, axis=1)[:, ::-1], rng.normal(size=(n, 3, 3)), rng.normal(size=(n, 3, 3)))


def clouds(rng, n=40):
    P = rng.normal(size=(n, 3))
    Q = rng.normal(size=(n + 3, 3))
    P[4] = P[1]  # duplicate source point: distance ties
    return P, Q


def as_rows(ms):
    return list(zip(ms.source.tolist(), ms.target.tolist(), ms.score.tolist()))


def test_closest_point_oracle(rng):
    P, Q = clouds(rng)
    ms = closest_point(SpatialIndex(P), Q)
    assert ms.kind == "C"
    for j, q in enumerate(Q):
        i, d = argmin_loop(len(P), lambda i: dist(P[i], q))
        assert (ms.source[j], ms.target[j], ms.score[j]) == (i, j, d)
    assert 4 not in ms.source.tolist()


def test_trim_oracle(rng):
    P, Q = clouds(rng)
    ms = closest_point(SpatialIndex(P), Q)
    for tau in (0.0, 0.1, 0.25, 0.5):
        t = trim(ms, tau)
        assert t.kind == "C1"
        assert as_rows(t) == oracle_trim(as_rows(ms), tau)
    with pytest.raises(ValueError):
        trim(ms, 1.0)


def test_trim_tie_order():
    ms = MatchSet([2, 0, 1, 0], [0, 1, 2, 3], [1.0, 1.0, 0.5, 1.0], "C")
    assert trim(ms, 0.0).pairs() == [(1, 2), (0, 1), (0, 3), (2, 0)]


def test_ctsf_matching_oracle(rng):
    P, Q = clouds(rng)
    dP, dQ = fake_descriptors(rng, len(P)), fake_descriptors(rng, len(Q))
    w = 0.7
    ms = ctsf_matching(P, Q, dP, dQ, w)
    assert ms.kind == "C2" and len(ms) == len(P)
    for i, p in enumerate(P):
        j, s = argmin_loop(len(Q), lambda j: dist(p, Q[j]) + w * sq(dP.eigenvalues[i], dQ.eigenvalues[j]))
        assert (ms.target[i], ms.score[i]) == (j, s)
    t = ctsf_trimmed(P, Q, dP, dQ, w, 0.2)
    assert t.kind == "C3" and as_rows(t) == oracle_trim(as_rows(ms), 0.2)


def test_ctsf_matching_zero_weight_is_euclidean(rng):
    P, Q = clouds(rng)
    d = fake_descriptors(rng, len(P))
    e = fake_descriptors(rng, len(Q))
    ms = ctsf_matching(P, Q, d, e, 0.0, direction="target")
    cp = closest_point(SpatialIndex(P), Q)
    assert ms.pairs() == cp.pairs() and np.array_equal(ms.score, cp.score)


def test_shape_matching_oracle(rng):
    dP, dQ = fake_descriptors(rng, 30), fake_descriptors(rng, 25)
    ms = shape_matching(dP, dQ)
    assert ms.kind == "C_CTSF" and ms.target.tolist() == list(range(25))
    for j in range(25):
        i, s = argmin_loop(30, lambda i: sq(dP.eigenvalues[i], dQ.eigenvalues[j]))
        assert (ms.source[j], ms.score[j]) == (i, s)


@pytest.mark.parametrize("strategy", [0, 1])
def test_lie_matching_oracle(rng, strategy):
    P, Q = clouds(rng, 20)
    dP, dQ = fake_descriptors(rng, len(P)), fake_descriptors(rng, len(Q))
    w = 0.3
    ms = lie_matching(P, Q, dP, dQ, strategy, w)
    omega = 1.0 if strategy == 0 else w
    for i in range(len(P)):
        def score(j):
            d11 = sq(dP.T11[i].ravel(), dQ.T11[j].ravel())
            d12 = sq(dP.Phi[i] @ P[i], dQ.Phi[j] @ Q[j])
            return omega * d11 + d12
        j, s = argmin_loop(len(Q), score)
        assert ms.target[i] == j
        assert ms.score[i] == pytest.approx(s, rel=1e-12)
    assert ms.kind == f"LIE{strategy}"


def test_lie_scores_precomputed_d11(rng):
    P, Q = clouds(rng, 15)
    dP, dQ = fake_descriptors(rng, len(P)), fake_descriptors(rng, len(Q))
    from lieicp.similarity import pairwise_sqdist
    d11 = pairwise_sqdist(dP.T11, dQ.T11)
    assert np.array_equal(lie_scores(P, Q, dP, dQ, 1, 0.5, d11), lie_scores(P, Q, dP, dQ, 1, 0.5))
    with pytest.raises(ValueError):
        lie_scores(P, Q, dP, dQ, 2, 0.5)


def test_matchset_validation():
    with pytest.raises(ValueError):
        MatchSet([0], [0], [0.0], "bogus")
    with pytest.raises(ValueError):
        MatchSet([0, 1], [0], [0.0], "C")
