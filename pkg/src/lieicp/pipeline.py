"""Iterative registration drivers: ICP, ICP-CTSF, SWC-ICP and their Lie variants.

Every driver alternates matching and the closed-form solve. A step that does
not lower the matched mean squared error is rejected; if the shape weight is
still positive the schedule advances (``m += 1``) and the loop resumes from the
best transform so far, otherwise the run stops. The returned transform is the
one with the lowest recorded error.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import PointCloud, RigidTransform, as_points, compose, mse
from .matching import (MatchSet, closest_point, ctsf_trimmed, lie_matching, lie_shape_matching,
                       shape_matching, trim)
from .similarity import (DescriptorSet, WeightSchedule, ctsf_matrix, default_w0, describe,
                         pairwise_sqdist)
from .solver import horn_solve
from .spatial import SpatialIndex
from .voting import DEFAULT_PHI_MAX, tensor_field

ALGORITHMS = ("ICP", "ICP-CTSF", "SWC-ICP", "ICP-LIE-0", "ICP-LIE-1", "SWC-LIE-0", "SWC-LIE-1")
DEFAULT_SWC_W0 = 10.0


@dataclass(frozen=True)
class RegistrationConfig:
    """Parameters shared by every driver.

    ``w0=None`` picks a data-driven initial weight (see :func:`resolve_w0`).
    ``direction`` is ``"native"`` (each relation keeps its own direction),
    ``"target"`` or ``"source"`` (force every relation to iterate that cloud).
    """

    algorithm: str = "ICP"
    tau: float = 0.0
    k_percent: float = 10.0
    w0: float | None = None
    b: float = 0.5
    m0: int = 1
    strategy: int | None = None
    max_iterations: int = 200
    phi_max: float = DEFAULT_PHI_MAX
    rel_tol: float = 1e-12
    abs_tol: float = 1e-28
    direction: str = "native"
    reverse_votes: bool = False
    normalize_trace: bool = False
    eps_rel: float = 1e-6
    tensor_prescale: bool = False
    refresh_field: bool = False
    lie_shape_relation: bool = True

    def __post_init__(self):
        alg = self.algorithm.upper()
        if alg in ("ICP-LIE", "SWC-LIE"):
            if self.strategy not in (0, 1):
                raise ValueError(f"{alg} needs strategy 0 or 1")
            alg = f"{alg}-{self.strategy}"
        if alg not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        strategy = int(alg[-1]) if "LIE" in alg else None
        if self.strategy is not None and strategy is not None and self.strategy != strategy:
            raise ValueError(f"{alg} conflicts with strategy={self.strategy}")
        object.__setattr__(self, "algorithm", alg)
        object.__setattr__(self, "strategy", strategy)
        if not 0 <= self.tau < 1:
            raise ValueError("tau must lie in [0, 1)")
        if not 0 < self.k_percent <= 100:
            raise ValueError("k_percent must lie in (0, 100]")
        if not 0 < self.b < 1:
            raise ValueError("b must lie in (0, 1)")
        if self.w0 is not None and self.w0 < 0:
            raise ValueError("w0 must be non-negative")
        if self.rel_tol < 0 or self.abs_tol < 0:
            raise ValueError("tolerances must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.direction not in ("native", "target", "source"):
            raise ValueError("direction must be 'native', 'target' or 'source'")

    @property
    def uses_shape(self) -> bool:
        return self.algorithm != "ICP"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    mrms: float
    w_m: float
    matches: int
    accepted: bool


@dataclass
class RunReport:
    per_iteration: list[IterationRecord]
    final_transform: RigidTransform
    converged: bool
    iterations_used: int
    w0: float
    degenerate: bool = False
    config: dict = field(default_factory=dict)

    @property
    def errors(self) -> list[float]:
        """Matched mean squared error of every recorded iteration."""
        return [r.mrms**2 for r in self.per_iteration]

    @property
    def final_mrms(self) -> float:
        return min(r.mrms for r in self.per_iteration)


def compute_descriptors(cloud, cfg: RegistrationConfig) -> DescriptorSet:
    """One tensor-voting pass plus eigenvalues and Lie factors."""
    S = tensor_field(cloud, cfg.k_percent, cfg.phi_max, reverse_votes=cfg.reverse_votes,
                     normalize_trace=cfg.normalize_trace)
    return describe(S, cfg.eps_rel, cfg.tensor_prescale)


def resolve_w0(cfg: RegistrationConfig, P, Q, dP: DescriptorSet | None, dQ: DescriptorSet | None) -> float:
    """Initial shape weight: explicit ``cfg.w0`` or a per-algorithm default.

    ICP-CTSF balances CTSF against point spacing, ICP-LIE against squared
    spacing; SWC variants use a dimensionless weight of 10.
    """
    if cfg.w0 is not None:
        return float(cfg.w0)
    alg = cfg.algorithm
    if alg == "ICP":
        return 0.0
    if alg.startswith("SWC"):
        return DEFAULT_SWC_W0
    return default_w0(P, Q, dP, dQ, "ctsf" if alg == "ICP-CTSF" else "lie")


def _source_direction(cfg, native):
    return native if cfg.direction == "native" else cfg.direction


def _nearest_pairs(Ps, Q, direction):
    if direction == "target":
        return closest_point(SpatialIndex(Ps), Q)
    tgt, dist = SpatialIndex(Q).nearest_many(Ps)
    return MatchSet(np.arange(len(Ps)), tgt, dist, "C")


def register(P, Q, cfg: RegistrationConfig, dP: DescriptorSet | None = None,
             dQ: DescriptorSet | None = None) -> RunReport:
    """Run ``cfg.algorithm`` aligning source ``P`` onto target ``Q``.

    Descriptors may be passed in to share one tensor-field pass across runs.
    """
    P = as_points(P.points if isinstance(P, PointCloud) else P)
    Q = as_points(Q.points if isinstance(Q, PointCloud) else Q)
    if len(P) == 0 or len(Q) == 0:
        raise ValueError("clouds must be nonempty")
    alg = cfg.algorithm
    if cfg.uses_shape:
        if len(P) < 3 or len(Q) < 3:
            raise ValueError(f"{alg} needs at least three points per cloud")
        dP = dP if dP is not None else compute_descriptors(P, cfg)
        dQ = dQ if dQ is not None else compute_descriptors(Q, cfg)
    w0 = resolve_w0(cfg, P, Q, dP, dQ)
    sched = WeightSchedule(w0, cfg.b, cfg.m0)
    lie = "LIE" in alg
    swc = alg.startswith("SWC")
    strategy = cfg.strategy
    # the schedule only matters where w_m enters the computation
    scheduled = alg in ("ICP-CTSF", "ICP-LIE-1") or swc

    ctsf_pq = ctsf_matrix(dP.eigenvalues, dQ.eigenvalues) if alg in ("ICP-CTSF", "SWC-ICP") else None
    d11 = pairwise_sqdist(dP.T11, dQ.T11) if lie else None
    shape_src = None
    if alg == "SWC-ICP" or (alg.startswith("SWC-LIE") and not cfg.lie_shape_relation):
        shape_src = shape_matching(dP, dQ, ctsf_pq if ctsf_pq is not None
                                   else ctsf_matrix(dP.eigenvalues, dQ.eigenvalues)).source

    # gains below roundoff of the squared extent are noise, not progress
    floor = cfg.abs_tol * float(np.sum((Q.max(axis=0) - Q.min(axis=0)) ** 2))
    T = RigidTransform.identity()
    best_T, best_eps, prev = T, math.inf, math.inf
    history: list[IterationRecord] = []
    converged = False
    degenerate = False
    for it in range(1, cfg.max_iterations + 1):
        Ps = P @ T.R.T + T.t
        if cfg.refresh_field and cfg.uses_shape:
            dP = compute_descriptors(Ps, cfg)
            if ctsf_pq is not None:
                ctsf_pq = ctsf_matrix(dP.eigenvalues, dQ.eigenvalues)
            if d11 is not None:
                d11 = pairwise_sqdist(dP.T11, dQ.T11)
        wm = sched.w
        S = None
        if alg == "ICP" or swc:
            ms = trim(_nearest_pairs(Ps, Q, _source_direction(cfg, "target")), cfg.tau)
            if swc:
                if shape_src is not None:
                    partner = shape_src
                else:
                    partner = lie_shape_matching(Ps, Q, dP, dQ, strategy, wm, d11).source
                # partners are keyed by target index
                S = Ps[partner[ms.target]]
        elif alg == "ICP-CTSF":
            ms = ctsf_trimmed(Ps, Q, dP, dQ, wm, cfg.tau, _source_direction(cfg, "source"), ctsf_pq)
        else:
            ms = trim(lie_matching(Ps, Q, dP, dQ, strategy, wm, _source_direction(cfg, "source"), d11),
                      cfg.tau)
        X, Y = Ps[ms.source], Q[ms.target]
        if len(X) < 3:
            raise ValueError("fewer than three correspondences survive trimming")
        dT, info = horn_solve(X, Y, S, wm if S is not None else 0.0, full_output=True)
        eps = mse(X, Y, dT)
        improved = prev == math.inf or eps < prev - max(prev * cfg.rel_tol, floor)
        history.append(IterationRecord(it, math.sqrt(eps), wm, len(ms), improved))
        if improved:
            T = compose(dT, T)
            prev = best_eps = eps
            best_T = T
            degenerate = info["degenerate"]
        elif scheduled and wm > 0.0:
            sched = sched.step()
            T = best_T
        else:
            converged = True
            break
    return RunReport(history, best_T, converged, len(history), w0, degenerate, cfg.to_dict())


def run_icp(P, Q, cfg: RegistrationConfig) -> RunReport:
    return register(P, Q, _as(cfg, "ICP"))


def run_icp_ctsf(P, Q, cfg: RegistrationConfig, **kw) -> RunReport:
    return register(P, Q, _as(cfg, "ICP-CTSF"), **kw)


def run_swc_icp(P, Q, cfg: RegistrationConfig, **kw) -> RunReport:
    return register(P, Q, _as(cfg, "SWC-ICP"), **kw)


def run_lie(P, Q, cfg: RegistrationConfig, **kw) -> RunReport:
    if "LIE" not in cfg.algorithm:
        raise ValueError("run_lie needs an ICP-LIE-* or SWC-LIE-* configuration")
    return register(P, Q, cfg, **kw)


def _as(cfg: RegistrationConfig, alg: str) -> RegistrationConfig:
    if cfg.algorithm == alg:
        return cfg
    d = cfg.to_dict()
    d.update(algorithm=alg, strategy=None)
    return RegistrationConfig(**d)
