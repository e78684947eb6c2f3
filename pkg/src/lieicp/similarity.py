"""Point-pair scores: CTSF, the CTSF-weighted distance and the Lie-algebra scores."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .eigen import jacobi_eigh
from .lie import DEFAULT_EPS_REL, LogEmbedding, tensor_factors

ZERO_CUTOFF = 1e-8
SAMPLE_PAIRS = 1000


@dataclass(frozen=True)
class WeightSchedule:
    """Geometric decay ``w_m = w0 * b**m``, snapped to zero below ``zero_cutoff``."""

    w0: float
    b: float = 0.5
    m: int = 1
    zero_cutoff: float = ZERO_CUTOFF

    def __post_init__(self):
        if self.w0 < 0:
            raise ValueError("w0 must be non-negative")
        if not 0 < self.b < 1:
            raise ValueError("b must lie in (0, 1)")
        if self.m < 0:
            raise ValueError("m must be non-negative")

    @property
    def w(self) -> float:
        w = self.w0 * self.b**self.m
        return 0.0 if w < self.zero_cutoff else w

    def step(self) -> "WeightSchedule":
        return replace(self, m=self.m + 1)


@dataclass(frozen=True)
class ShapeDescriptor:
    """Eigenvalues and embedding factors of one point's orientation tensor.

    ``T12`` depends on where the point currently is, so only the
    position-free factors are stored and :attr:`embedding` is rebuilt on demand.
    """

    point: np.ndarray
    eigenvalues: np.ndarray
    T11: np.ndarray
    Phi: np.ndarray

    @property
    def embedding(self) -> LogEmbedding:
        return LogEmbedding(self.T11, self.Phi @ self.point)

    def at(self, point) -> "ShapeDescriptor":
        return replace(self, point=np.asarray(point, dtype=np.float64))


@dataclass(frozen=True)
class DescriptorSet:
    """Per-cloud descriptor arrays; row ``i`` belongs to cloud point ``i``."""

    eigenvalues: np.ndarray  # (n, 3), descending
    T11: np.ndarray  # (n, 3, 3)
    Phi: np.ndarray  # (n, 3, 3)

    def __len__(self):
        return len(self.eigenvalues)

    def T12(self, points) -> np.ndarray:
        return np.einsum("nij,nj->ni", self.Phi, points)

    def descriptor(self, i: int, point) -> ShapeDescriptor:
        return ShapeDescriptor(np.asarray(point, dtype=np.float64), self.eigenvalues[i],
                               self.T11[i], self.Phi[i])


def describe(tensors, eps_rel: float = DEFAULT_EPS_REL, prescale: bool = False) -> DescriptorSet:
    """Eigenvalues and Lie factors for a stack of orientation tensors (one pass)."""
    tensors = np.asarray(tensors, dtype=np.float64)
    ev = np.array([jacobi_eigh(S)[0] for S in tensors]).reshape(len(tensors), 3)
    T11, Phi = tensor_factors(tensors, eps_rel, prescale)
    return DescriptorSet(ev, T11, Phi)


def ctsf(dp: ShapeDescriptor, dq: ShapeDescriptor) -> float:
    d = dp.eigenvalues - dq.eigenvalues
    return float(np.sum(d * d))


def euclidean(p, q) -> float:
    d = np.asarray(p, dtype=np.float64) - np.asarray(q, dtype=np.float64)
    return float(np.sqrt(np.sum(d * d)))


def d_cm(p, q, dp: ShapeDescriptor, dq: ShapeDescriptor, w: WeightSchedule | float) -> float:
    """Euclidean distance plus the weighted CTSF."""
    wm = w.w if isinstance(w, WeightSchedule) else float(w)
    return euclidean(p, q) + wm * ctsf(dp, dq)


def lie_difference(dp: ShapeDescriptor, dq: ShapeDescriptor):
    """``(T11(p) - T11(q), T12(p) - T12(q))``."""
    ep, eq = dp.embedding, dq.embedding
    return ep.T11 - eq.T11, ep.T12 - eq.T12


def _lie_terms(dp, dq):
    D11, D12 = lie_difference(dp, dq)
    D11 = D11.reshape(9)
    return float(np.sum(D11 * D11)), float(np.sum(D12 * D12))


def frob_score(dp: ShapeDescriptor, dq: ShapeDescriptor) -> float:
    """``||D11||_F^2 + ||D12||^2``."""
    a, b = _lie_terms(dp, dq)
    return a + b


def weighted_frob_score(dp: ShapeDescriptor, dq: ShapeDescriptor, w: WeightSchedule | float) -> float:
    """``omega * ||D11||_F^2 + ||D12||^2``."""
    omega = w.w if isinstance(w, WeightSchedule) else float(w)
    a, b = _lie_terms(dp, dq)
    return omega * a + b


# pairwise matrices used by the matchers ---------------------------------------

def pairwise_sqdist(A, B) -> np.ndarray:
    """``out[i, j] = sum_k (A[i, k] - B[j, k])**2`` computed by differences.

    Columns are accumulated left to right, so the result does not depend on
    the shapes involved.
    """
    A = np.asarray(A, dtype=np.float64).reshape(len(A), -1)
    B = np.asarray(B, dtype=np.float64).reshape(len(B), -1)
    if A.shape[1] != B.shape[1]:
        raise ValueError("feature dimensions differ")
    out = np.zeros((len(A), len(B)))
    d = np.empty_like(out)
    for k in range(A.shape[1]):
        np.subtract(A[:, k, None], B[None, :, k], out=d)
        np.multiply(d, d, out=d)
        out += d
    return out


def distance_matrix(P, Q) -> np.ndarray:
    return np.sqrt(pairwise_sqdist(P, Q))


def ctsf_matrix(evP, evQ) -> np.ndarray:
    return pairwise_sqdist(evP, evQ)


def lie_matrices(T11P, T12P, T11Q, T12Q):
    """Pairwise ``||D11||_F^2`` and ``||D12||^2`` between two descriptor sets."""
    return pairwise_sqdist(T11P, T11Q), pairwise_sqdist(T12P, T12Q)


def default_w0(P, Q, dP: DescriptorSet, dQ: DescriptorSet, score: str = "ctsf",
               seed: int = 0) -> float:
    """Initial weight balancing the shape term against point spacing at ``m = 0``.

    ``score="ctsf"``: ``10 * median NN distance / median CTSF``.
    ``score="lie"``: ``10 * median NN distance**2 / median ||D11||^2`` (the
    other Lie term is already a squared length). Medians of the shape term
    come from a fixed pseudo-random sample of cross-cloud pairs. Returns 0 when
    the shape term vanishes on the whole sample.
    """
    from .spatial import SpatialIndex

    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    idx = SpatialIndex(Q)
    spacing = 0.0
    if len(Q) > 1:
        _, nn = idx.knn(Q, 1, exclude=np.arange(len(Q)))
        spacing = float(np.median(nn[:, 0]))
    rng = np.random.Generator(np.random.Philox(seed))
    i = rng.integers(0, len(P), SAMPLE_PAIRS)
    j = rng.integers(0, len(Q), SAMPLE_PAIRS)
    if score == "ctsf":
        d = dP.eigenvalues[i] - dQ.eigenvalues[j]
        length = spacing
    elif score == "lie":
        d = (dP.T11[i] - dQ.T11[j]).reshape(SAMPLE_PAIRS, 9)
        length = spacing * spacing
    else:
        raise ValueError(f"unknown score family {score!r}")
    vals = np.sum(d * d, axis=1)
    med = float(np.median(vals))
    if med <= 0.0:
        nz = vals[vals > 0]
        if len(nz) == 0:
            return 0.0
        med = float(np.median(nz))
    return 10.0 * length / med
