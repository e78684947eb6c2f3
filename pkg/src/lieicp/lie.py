"""Embedding Gaussians N(mu, Sigma) into a matrix Lie algebra.

A Gaussian is mapped to the affine matrix ``[[Z, mu], [0, 1]]`` with
``Z = L^{-T}`` upper triangular, where ``L`` is the lower Cholesky factor of
``Sigma^{-1}``. Such matrices form a group under multiplication, and their
principal logarithm has the block form ``[[T11, T12], [0, 0]]`` with

    T11 = log(Z),    T12 = (Z - I)^{-1} log(Z) mu.

``(Z - I)^{-1} log(Z)`` is evaluated as a power series that stays finite when
``Z - I`` is singular, see :func:`phi_factor`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

DIM = 3
DEFAULT_EPS_REL = 1e-6
SQRT_THRESHOLD = 0.25
SERIES_TOL = 1e-16
MAX_SQRT = 64
MAX_TERMS = 200


@dataclass(frozen=True)
class GaussianModel:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64).reshape(DIM)
        S = np.array(self.sigma, dtype=np.float64).reshape(DIM, DIM)
        S = 0.5 * (S + S.T)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", S)


@dataclass(frozen=True)
class AffinePlus:
    """``[[Z, mu], [0, 1]]`` with ``Z`` upper triangular, positive diagonal."""

    Z: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        Z = np.array(self.Z, dtype=np.float64).reshape(DIM, DIM)
        mu = np.array(self.mu, dtype=np.float64).reshape(DIM)
        if np.any(np.tril(Z, -1) != 0.0):
            raise ValueError("Z must be upper triangular")
        if np.any(np.diag(Z) <= 0.0):
            raise ValueError("Z must have a strictly positive diagonal")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "mu", mu)

    def matrix(self) -> np.ndarray:
        A = np.eye(DIM + 1)
        A[:DIM, :DIM] = self.Z
        A[:DIM, DIM] = self.mu
        return A

    @classmethod
    def from_matrix(cls, A) -> "AffinePlus":
        A = np.asarray(A, dtype=np.float64)
        return cls(np.triu(A[:DIM, :DIM]), A[:DIM, DIM])

    @classmethod
    def identity(cls) -> "AffinePlus":
        return cls(np.eye(DIM), np.zeros(DIM))


@dataclass(frozen=True)
class LogEmbedding:
    """Lie-algebra image ``[[T11, T12], [0, 0]]``."""

    T11: np.ndarray
    T12: np.ndarray

    def matrix(self) -> np.ndarray:
        X = np.zeros((DIM + 1, DIM + 1))
        X[:DIM, :DIM] = self.T11
        X[:DIM, DIM] = self.T12
        return X

    def __add__(self, other: "LogEmbedding") -> "LogEmbedding":
        return LogEmbedding(self.T11 + other.T11, self.T12 + other.T12)

    def __mul__(self, lam: float) -> "LogEmbedding":
        return LogEmbedding(lam * self.T11, lam * self.T12)

    __rmul__ = __mul__


def regularize(S, eps_rel: float = DEFAULT_EPS_REL) -> np.ndarray:
    """``S + eps I`` with ``eps = eps_rel * max(trace(S), 1)``."""
    if eps_rel <= 0:
        raise ValueError("eps_rel must be positive")
    S = np.asarray(S, dtype=np.float64)
    eps = eps_rel * max(float(np.trace(S)), 1.0)
    return S + eps * np.eye(S.shape[0])


def cholesky_inverse_factor(Sigma) -> np.ndarray:
    """``L^{-T}`` for the lower Cholesky factor ``L`` of ``Sigma^{-1}``.

    ``U = L^{-T}`` is the upper triangular factor with ``Sigma = U U^T``; it is
    obtained from a Cholesky factorisation of the index-reversed ``Sigma``,
    which avoids forming the inverse.
    """
    S = np.asarray(Sigma, dtype=np.float64)
    S = 0.5 * (S + S.T)
    J = S[::-1, ::-1]
    try:
        G = np.linalg.cholesky(J)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("covariance is not positive definite") from exc
    return np.triu(G[::-1, ::-1])


def triangular_sqrt(U) -> np.ndarray:
    """Principal square root of an upper triangular matrix with positive diagonal."""
    U = np.asarray(U, dtype=np.float64)
    n = U.shape[0]
    R = np.zeros_like(U)
    for i in range(n):
        R[i, i] = math.sqrt(U[i, i])
    for d in range(1, n):
        for i in range(n - d):
            j = i + d
            acc = U[i, j] - R[i, i + 1:j] @ R[i + 1:j, j]
            R[i, j] = acc / (R[i, i] + R[j, j])
    return R


def _mercator(C: np.ndarray) -> np.ndarray:
    """``sum_{n>=1} (-1)^{n-1} C^n / n`` for small ``C``."""
    out = np.zeros_like(C)
    P = np.eye(C.shape[0])
    for n in range(1, MAX_TERMS):
        P = P @ C
        term = P / n
        out = out + term if n % 2 else out - term
        if np.max(np.abs(term)) < SERIES_TOL:
            break
    return out


def _phi_series(C: np.ndarray) -> np.ndarray:
    """``sum_{n>=0} (-1)^n C^n / (n + 1)``, i.e. ``C^{-1} log(I + C)``."""
    out = np.eye(C.shape[0])
    P = np.eye(C.shape[0])
    for n in range(1, MAX_TERMS):
        P = P @ C
        term = P / (n + 1)
        out = out - term if n % 2 else out + term
        if np.max(np.abs(term)) < SERIES_TOL:
            break
    return out


def _check_pdut(U):
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValueError("expected a square matrix")
    if np.any(np.tril(U, -1) != 0.0):
        raise ValueError("matrix must be upper triangular")
    if np.any(~np.isfinite(U)) or np.any(np.diag(U) <= 0.0):
        raise ValueError("logarithm needs a strictly positive diagonal")
    return U


def _square_roots(U):
    """Repeated square roots until ``||U^(1/2^k) - I||_F < 0.25``."""
    roots = [U]
    I = np.eye(U.shape[0])
    while np.linalg.norm(roots[-1] - I) >= SQRT_THRESHOLD:
        if len(roots) > MAX_SQRT:
            raise ArithmeticError("square-root scaling did not converge")
        roots.append(triangular_sqrt(roots[-1]))
    return roots


def log_pdut(U) -> np.ndarray:
    """Principal logarithm of an upper triangular matrix with positive diagonal.

    Inverse scaling and squaring: square roots until close to the identity,
    the Mercator series, then scale back by ``2^k``.
    """
    U = _check_pdut(U)
    roots = _square_roots(U)
    k = len(roots) - 1
    L = _mercator(roots[-1] - np.eye(U.shape[0]))
    return np.triu(L * 2.0**k)


def phi_factor(C) -> np.ndarray:
    """``C^{-1} log(I + C)`` for ``I + C`` upper triangular with positive diagonal.

    With ``V = U^{1/2}``, ``U - I = (V - I)(V + I)`` and ``log U = 2 log V``, so
    ``phi(U - I) = 2 (V + I)^{-1} phi(V - I)``. After ``k`` square roots the
    remaining factor is summed as a series; only the well-conditioned
    ``V + I`` are ever inverted.
    """
    C = np.asarray(C, dtype=np.float64)
    U = _check_pdut(C + np.eye(C.shape[0]))
    roots = _square_roots(U)
    I = np.eye(U.shape[0])
    out = _phi_series(roots[-1] - I)
    for V in reversed(roots[1:]):
        out = 2.0 * solve_triangular(V + I, out, lower=False)
    return np.triu(out)


def embed(g: GaussianModel) -> AffinePlus:
    """Gaussian -> ``[[L^{-T}, mu], [0, 1]]``."""
    return AffinePlus(cholesky_inverse_factor(g.sigma), g.mu)


def unembed(A: AffinePlus) -> GaussianModel:
    """Inverse of :func:`embed`: ``Sigma = Z Z^T``."""
    return GaussianModel(A.mu, A.Z @ A.Z.T)


def log_embedding(A: AffinePlus) -> LogEmbedding:
    T11 = log_pdut(A.Z)
    T12 = phi_factor(A.Z - np.eye(DIM)) @ A.mu
    return LogEmbedding(T11, T12)


def expm_series(X) -> np.ndarray:
    """Matrix exponential: Taylor series with scaling and squaring."""
    X = np.asarray(X, dtype=np.float64)
    norm = np.linalg.norm(X, 1)
    s = max(0, int(math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0)
    Y = X / 2.0**s
    out = np.eye(X.shape[0])
    term = np.eye(X.shape[0])
    for n in range(1, MAX_TERMS):
        term = term @ Y / n
        out = out + term
        if np.max(np.abs(term)) < SERIES_TOL * max(1.0, np.max(np.abs(out))):
            break
    for _ in range(s):
        out = out @ out
    return out


def exp_embedding(E: LogEmbedding) -> AffinePlus:
    """Group element whose logarithm is ``E``."""
    return AffinePlus.from_matrix(expm_series(E.matrix()))


def group_product(g1: GaussianModel, g2: GaussianModel) -> GaussianModel:
    """``N(L1^{-T} mu2 + mu1, (L1 L2)^{-T} (L1 L2)^{-1})``."""
    U1 = cholesky_inverse_factor(g1.sigma)
    U2 = cholesky_inverse_factor(g2.sigma)
    L1 = np.linalg.inv(U1).T
    L2 = np.linalg.inv(U2).T
    M_inv_T = np.linalg.inv(L1 @ L2).T
    return GaussianModel(U1 @ g2.mu + g1.mu, M_inv_T @ M_inv_T.T)


def logeuclid_product(A1: AffinePlus, A2: AffinePlus) -> AffinePlus:
    """``exp(log A1 + log A2)``; commutative by construction."""
    return exp_embedding(log_embedding(A1) + log_embedding(A2))


def logeuclid_scale(lam: float, A: AffinePlus) -> AffinePlus:
    """``exp(lam * log A)``, the real power ``A^lam``."""
    return exp_embedding(lam * log_embedding(A))


def tensor_factors(tensors, eps_rel: float = DEFAULT_EPS_REL, prescale: bool = False):
    """Position-independent parts of the embedding for a stack of tensors.

    Returns ``(T11, Phi)``, each ``(n, 3, 3)``: the log of ``L^{-T}`` and the
    matrix ``(L^{-T} - I)^{-1} log(L^{-T})`` that maps a point to ``T12``.
    """
    tensors = np.asarray(tensors, dtype=np.float64)
    n = len(tensors)
    T11 = np.empty((n, DIM, DIM))
    Phi = np.empty((n, DIM, DIM))
    I = np.eye(DIM)
    for i, S in enumerate(tensors):
        if prescale:
            S = S / max(float(np.trace(S)), 1.0)
        Z = cholesky_inverse_factor(regularize(S, eps_rel))
        T11[i] = log_pdut(Z)
        Phi[i] = phi_factor(Z - I)
    return T11, Phi
