"""Correspondence relations between a source cloud P and a target cloud Q.

Directions follow the relations they implement: the plain closest-point and
shape-only relations let every target point claim a source point, while the
CTSF-weighted and Lie relations let every source point claim a target point.
``direction="target"`` forces the latter to iterate targets as well.

All argmins break ties on the smallest index; trimmed sets are ordered by
``(score, source, target)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import as_points
from .similarity import (DescriptorSet, WeightSchedule, ctsf_matrix, distance_matrix,
                         lie_matrices, pairwise_sqdist)
from .spatial import SpatialIndex

KINDS = ("C", "C1", "C2", "C3", "C_CTSF", "LIE0", "LIE1")
_TRIMMED = {"C": "C1", "C2": "C3"}


@dataclass(frozen=True)
class MatchSet:
    source: np.ndarray
    target: np.ndarray
    score: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown match kind {self.kind!r}")
        src = np.asarray(self.source, dtype=np.intp)
        tgt = np.asarray(self.target, dtype=np.intp)
        sc = np.asarray(self.score, dtype=np.float64)
        if not (src.shape == tgt.shape == sc.shape):
            raise ValueError("source, target and score must align")
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "target", tgt)
        object.__setattr__(self, "score", sc)

    def __len__(self):
        return len(self.source)

    def pairs(self):
        return list(zip(self.source.tolist(), self.target.tolist()))


def _scalar_weight(w) -> float:
    return w.w if isinstance(w, WeightSchedule) else float(w)


def _argmin_rows(M: np.ndarray):
    j = np.argmin(M, axis=1)
    return j, M[np.arange(len(M)), j]


def closest_point(P_index: SpatialIndex, Q) -> MatchSet:
    """Every target point paired with its nearest source point (relation C)."""
    Qp = as_points(Q.points if hasattr(Q, "points") else Q)
    src, dist = P_index.nearest_many(Qp)
    return MatchSet(src, np.arange(len(Qp)), dist, "C")


def trim(ms: MatchSet, tau: float, kind: str | None = None) -> MatchSet:
    """Keep the best ``ceil(c (1 - tau))`` pairs by ``(score, source, target)``."""
    if not 0 <= tau < 1:
        raise ValueError("tau must lie in [0, 1)")
    if len(ms) == 0:
        raise ValueError("cannot trim an empty match set")
    keep = math.ceil(len(ms) * (1.0 - tau) - 1e-9)
    if keep < 1:
        raise ValueError("trimming left no correspondences")
    order = np.lexsort((ms.target, ms.source, ms.score))[:keep]
    return MatchSet(ms.source[order], ms.target[order], ms.score[order],
                    kind or _TRIMMED.get(ms.kind, ms.kind))


def ctsf_matching(P, Q, dP: DescriptorSet, dQ: DescriptorSet, w, direction: str = "source",
                  ctsf_pq: np.ndarray | None = None) -> MatchSet:
    """Relation C2: argmin of ``|x - y| + w_m CTSF(x, y)``.

    ``ctsf_pq`` may carry a precomputed ``(|P|, |Q|)`` CTSF matrix, which does
    not change while the clouds move.
    """
    P = as_points(P)
    Q = as_points(Q)
    wm = _scalar_weight(w)
    score = distance_matrix(P, Q)
    if wm != 0.0:
        C = ctsf_matrix(dP.eigenvalues, dQ.eigenvalues) if ctsf_pq is None else ctsf_pq
        score = score + wm * C
    return _from_scores(score, direction, "C2")


def ctsf_trimmed(P, Q, dP, dQ, w, tau: float, direction: str = "source",
                 ctsf_pq: np.ndarray | None = None) -> MatchSet:
    return trim(ctsf_matching(P, Q, dP, dQ, w, direction, ctsf_pq), tau, "C3")


def shape_matching(dP: DescriptorSet, dQ: DescriptorSet, ctsf_pq: np.ndarray | None = None) -> MatchSet:
    """Relation C_CTSF: every target point paired with the most similar-shaped source point."""
    C = ctsf_matrix(dP.eigenvalues, dQ.eigenvalues) if ctsf_pq is None else ctsf_pq
    return _from_scores(C, "target", "C_CTSF")


def lie_scores(P, Q, dP: DescriptorSet, dQ: DescriptorSet, strategy: int, w,
               d11: np.ndarray | None = None) -> np.ndarray:
    """``(|P|, |Q|)`` matrix of Lie scores at the current point positions."""
    if strategy not in (0, 1):
        raise ValueError("strategy must be 0 or 1")
    P = as_points(P)
    Q = as_points(Q)
    if d11 is None:
        d11, d12 = lie_matrices(dP.T11, dP.T12(P), dQ.T11, dQ.T12(Q))
    else:
        d12 = pairwise_sqdist(dP.T12(P), dQ.T12(Q))
    omega = 1.0 if strategy == 0 else _scalar_weight(w)
    return omega * d11 + d12


def lie_matching(P, Q, dP: DescriptorSet, dQ: DescriptorSet, strategy: int, w,
                 direction: str = "source", d11: np.ndarray | None = None) -> MatchSet:
    """Every source point paired with the target minimising the Lie score."""
    score = lie_scores(P, Q, dP, dQ, strategy, w, d11)
    return _from_scores(score, direction, "LIE0" if strategy == 0 else "LIE1")


def lie_shape_matching(P, Q, dP, dQ, strategy: int, w, d11=None) -> MatchSet:
    """Lie-score analogue of :func:`shape_matching` (targets claim sources)."""
    score = lie_scores(P, Q, dP, dQ, strategy, w, d11)
    return _from_scores(score, "target", "C_CTSF")


def _from_scores(score: np.ndarray, direction: str, kind: str) -> MatchSet:
    if direction == "source":
        tgt, val = _argmin_rows(score)
        return MatchSet(np.arange(score.shape[0]), tgt, val, kind)
    if direction == "target":
        src, val = _argmin_rows(score.T)
        return MatchSet(src, np.arange(score.shape[1]), val, kind)
    raise ValueError("direction must be 'source' or 'target'")
