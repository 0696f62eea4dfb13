"""Spectral flow along linear paths ``D_r = D_0 + rV`` and the eta invariant."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi, sqrt

import numpy as np
from scipy.special import erfc

from .errors import EndpointKernel, NotCompressed, PartitionBudgetExceeded, ShapeMismatch
from .linalg import (
    BlockOperator,
    WeightedProjection,
    default_kernel_tol,
    eigh,
    kernel_projection,
    uniform_norm,
    weighted_count,
)
from .quadrature import adaptive_integrate
from .shift import StepFunction, xi_counting

COMPRESSION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FlowRequest:
    d0: BlockOperator
    v: BlockOperator
    mu: float = 0.0
    epsilon: float = 1.0
    partition_budget: int = 2 ** 14

    def __post_init__(self):
        if self.d0.dims != self.v.dims or self.d0.weights != self.v.weights:
            raise ShapeMismatch(f"block structure {self.d0.dims} vs {self.v.dims}")
        if not (self.d0.hermitian_flag and self.v.hermitian_flag):
            raise ShapeMismatch("D_0 and V must be flagged Hermitian")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def d1(self) -> BlockOperator:
        return self.d0 + self.v

    def at(self, r: float) -> BlockOperator:
        return self.d0 + self.v * float(r)

    def replace(self, **kw) -> "FlowRequest":
        args = dict(d0=self.d0, v=self.v, mu=self.mu, epsilon=self.epsilon, partition_budget=self.partition_budget)
        args.update(kw)
        return FlowRequest(**args)


# -- (P,Q)-index ----------------------------------------------------------------


def _range_basis(P: np.ndarray) -> np.ndarray:
    lam, u = np.linalg.eigh(P)
    return u[:, lam > 0.5]


def _nullity(M: np.ndarray, thr: float) -> int:
    if M.shape[1] == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(M.shape[1] - np.count_nonzero(s > thr))


def pq_index_counts(T: BlockOperator, P: BlockOperator, Q: BlockOperator) -> tuple:
    """Per-block ``dim(ker T & ran Q) - dim(ker T* & ran P)`` as integers."""
    if not (T.same_shape(P) and T.same_shape(Q)):
        raise ShapeMismatch("T, P and Q must share a block structure")
    if uniform_norm(T - P @ T @ Q) > COMPRESSION_TOL:
        raise NotCompressed("T is not of the form P T Q")
    thr = 1e-9 * (1.0 + uniform_norm(T))
    counts = []
    for t, p, q in zip(T.blocks, P.blocks, Q.blocks):
        bq = _range_basis(q)
        bp = _range_basis(p)
        counts.append(_nullity(t @ bq, thr) - _nullity(t.conj().T @ bp, thr))
    return tuple(counts)


def _as_operator(P) -> BlockOperator:
    return P.projection if isinstance(P, WeightedProjection) else P


def pq_index(T: BlockOperator, P, Q) -> float:
    """``tau[ker T & ran Q] - tau[ker T* & ran P]`` for ``T = P T Q``."""
    return weighted_count(pq_index_counts(T, _as_operator(P), _as_operator(Q)), T.weights)


# -- spectral flow ------------------------------------------------------------------


def _check_endpoints(req: FlowRequest) -> None:
    for name, D in (("D_0", req.d0), ("D_1", req.d1)):
        d = eigh(D)
        if kernel_projection(d, req.mu).weighted_rank > 0:
            raise EndpointKernel(f"mu = {req.mu} is an eigenvalue of {name}")


def positive_projection(D: BlockOperator, mu: float) -> list:
    """Per-block ``chi_[mu, inf)(D)`` as dense matrices."""
    out = []
    for lam, u in zip(*_eig_blocks(D)):
        v = u[:, lam >= mu]
        out.append(v @ v.conj().T)
    return out


def _eig_blocks(D: BlockOperator):
    d = eigh(D)
    return d.eigenvalues, d.eigenvectors


def _rank(P: np.ndarray) -> int:
    return int(round(np.real(np.trace(P))))


def _minimal_jump(P: np.ndarray, Q: np.ndarray) -> bool:
    """Whether ``P - Q`` has exactly ``|rank P - rank Q|`` singular values at one.

    Singular value one of ``P - Q`` comes from ``ran P & ker Q`` or
    ``ker P & ran Q``; their dimensions total at least the rank change.  With
    no rank change this is ``||P - Q|| < 1``.
    """
    s = np.linalg.svd(P - Q, compute_uv=False)
    unit = int(np.count_nonzero(s > 1.0 - 1e-9))
    return unit == abs(_rank(P) - _rank(Q))


def _segment_index(P: list, Q: list, weights) -> tuple:
    Pop = BlockOperator(tuple(P), weights)
    Qop = BlockOperator(tuple(Q), weights)
    return pq_index_counts(Pop @ Qop, Pop, Qop)


@dataclass(frozen=True)
class PartitionResult:
    value: float
    counts: tuple
    nodes: tuple


def spectral_flow_partition_detail(req: FlowRequest, depth: int | None = None) -> PartitionResult:
    """Sum of ``ind_{P_{j-1}, P_j}(P_{j-1} P_j)`` over a dyadic partition of ``[0, 1]``.

    ``P_t = chi_[0, inf)(D_t - mu)``.  Without ``depth`` each segment is halved
    until its endpoint projections differ only by the net crossings
    (``_minimal_jump``); with ``depth`` the uniform partition into ``2**depth``
    segments is used, refined further where a segment is not yet minimal.
    """
    _check_endpoints(req)
    weights = req.d0.weights
    cache = {}

    def proj(t: float):
        if t not in cache:
            cache[t] = positive_projection(req.at(t), req.mu)
        return cache[t]

    if depth is None:
        stack = [(0.0, 1.0)]
    else:
        m = 2 ** depth
        stack = [(k / m, (k + 1) / m) for k in range(m)][::-1]
    segments = 0
    totals = [0] * len(weights)
    nodes = [0.0]
    while stack:
        a, b = stack.pop()
        Pa, Pb = proj(a), proj(b)
        if all(_minimal_jump(p, q) for p, q in zip(Pa, Pb)):
            for k, c in enumerate(_segment_index(Pa, Pb, weights)):
                totals[k] += c
            nodes.append(b)
            segments += 1
            continue
        if segments + len(stack) + 2 > req.partition_budget or not a < 0.5 * (a + b) < b:
            raise PartitionBudgetExceeded(f"partition needs more than {req.partition_budget} segments")
        m = 0.5 * (a + b)
        stack.append((m, b))
        stack.append((a, m))
    return PartitionResult(weighted_count(totals, weights), tuple(totals), tuple(nodes))


def spectral_flow_partition(req: FlowRequest, depth: int | None = None) -> float:
    return spectral_flow_partition_detail(req, depth).value


def spectral_flow_counting(req: FlowRequest) -> float:
    """``N_{D_0}(mu) - N_{D_1}(mu)`` with per-block integer counts."""
    _check_endpoints(req)
    d0, d1 = eigh(req.d0), eigh(req.d1)
    diff = [int(np.searchsorted(a, req.mu, side="right")) - int(np.searchsorted(b, req.mu, side="right"))
            for a, b in zip(d0.eigenvalues, d1.eigenvalues)]
    return weighted_count(diff, req.d0.weights)


# -- eta invariant and the Carey-Phillips formula --------------------------------


def eta_invariant(D: BlockOperator, epsilon: float) -> float:
    """``sum_j w_j sign(l_j) erfc(sqrt(eps) |l_j|)``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    d = eigh(D)
    total = 0.0
    for lam, w in zip(d.eigenvalues, d.weights):
        total += w * float(np.sum(np.sign(lam) * erfc(sqrt(epsilon) * np.abs(lam))))
    return total


def eta_invariant_quadrature(D: BlockOperator, epsilon: float, tail: float = 1e-14, tol: float = 1e-12) -> float:
    """``pi^{-1/2} int_eps^T tau(D exp(-tD^2)) t^{-1/2} dt`` by adaptive quadrature.

    ``T`` is the first point past which the integrand stays below ``tail``.
    Panels double in length so the slowly decaying part is resolved.
    """
    d = eigh(D)
    lam = np.concatenate([ev for ev in d.eigenvalues])
    w = np.concatenate([np.full(ev.size, wt) for ev, wt in zip(d.eigenvalues, d.weights)])

    def g(t: float) -> float:
        # tau(D exp(-t D^2)) t^{-1/2} / sqrt(pi), evaluated spectrally
        return float(np.sum(w * lam * np.exp(-t * lam ** 2))) / sqrt(pi * t)

    def envelope(t: float) -> float:
        return float(np.sum(w * np.abs(lam) * np.exp(-t * lam ** 2))) / sqrt(pi * t)

    nz = np.abs(lam)[np.abs(lam) > 0]
    if nz.size == 0:
        return 0.0
    total = 0.0
    lo = epsilon
    width = max(epsilon, 1.0 / float(np.max(nz)) ** 2)
    while envelope(lo) > tail:
        hi = lo + width
        total += adaptive_integrate(g, lo, hi, tol=tol).value
        lo, width = hi, 2.0 * width
    return float(np.real(total))


def _heat_integrand(req: FlowRequest):
    eps, mu = req.epsilon, req.mu

    def g(r: float) -> float:
        total = 0.0
        for d0, v, w in zip(req.d0.blocks, req.v.blocks, req.d0.weights):
            lam, u = np.linalg.eigh(d0 + r * v)
            # tr(V exp(-eps (D_r - mu)^2)) in the eigenbasis of D_r
            diag = np.real(np.einsum("ij,ik,kj->j", u.conj(), v, u))
            total += w * float(np.sum(diag * np.exp(-eps * (lam - mu) ** 2)))
        return sqrt(eps / pi) * total

    return g


def kernel_trace(D: BlockOperator, mu: float) -> float:
    d = eigh(D)
    return kernel_projection(d, mu, default_kernel_tol(d)).weighted_rank


def carey_phillips_flow(req: FlowRequest, tol: float = 1e-10, max_evals: int = 10_000) -> float:
    """Heat-kernel integral along the path plus half eta difference plus half kernel difference."""
    integral = adaptive_integrate(_heat_integrand(req), 0.0, 1.0, tol=tol, max_evals=max_evals).value
    D0 = req.d0.shift(req.mu)
    D1 = req.d1.shift(req.mu)
    eta = 0.5 * (eta_invariant(D1, req.epsilon) - eta_invariant(D0, req.epsilon))
    kern = 0.5 * (kernel_trace(req.d1, req.mu) - kernel_trace(req.d0, req.mu))
    return float(np.real(integral)) + eta + kern


# -- flow versus spectral shift ------------------------------------------------------


@dataclass(frozen=True)
class FlowReport:
    mu: float
    sf_counting: float
    sf_partition: float
    sf_carey_phillips: float
    xi_at_mu: float
    kernel_correction: float
    collision: bool = False
    consistency: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.consistency.values())


def flow_report(req: FlowRequest, xi: StepFunction | None = None, cp_tol: float = 1e-6) -> FlowReport:
    xi = xi or xi_counting(req.d0, req.v)
    kc = 0.5 * (kernel_trace(req.d1, req.mu) - kernel_trace(req.d0, req.mu))
    cp = carey_phillips_flow(req)
    xv = float(xi(req.mu))
    try:
        sc = spectral_flow_counting(req)
        sp = spectral_flow_partition(req)
    except EndpointKernel:
        return FlowReport(req.mu, np.nan, np.nan, cp, xv, kc, collision=True)
    consistency = {
        "counting_equals_partition": sc == sp,
        "carey_phillips": abs(cp - sc) <= cp_tol,
        "flow_equals_shift": sc == xv and kc == 0,
    }
    return FlowReport(req.mu, sc, sp, cp, xv, kc, False, consistency)


def flow_shift_identity_check(req: FlowRequest, mu_grid) -> list:
    """One report per level; levels on endpoint spectra are flagged, not raised."""
    xi = xi_counting(req.d0, req.v)
    return [flow_report(req.replace(mu=float(mu)), xi) for mu in mu_grid]


def smoothed_shift(xi: StepFunction, epsilon: float, mu) -> np.ndarray:
    """``(j_eps * xi)(mu)`` with ``j_eps(x) = sqrt(eps/pi) exp(-eps x^2)``, exactly."""
    from scipy.special import erf

    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    lo, hi = xi.breakpoints[:-1], xi.breakpoints[1:]
    v = xi.values[1:-1]
    s = sqrt(epsilon)
    cdf = lambda x: 0.5 * erf(s * x)
    return np.sum(v[None, :] * (cdf(hi[None, :] - mu[:, None]) - cdf(lo[None, :] - mu[:, None])), axis=1)


def approximate_identity_l1_error(xi: StepFunction, epsilon: float, points_per_piece: int = 64) -> float:
    """``int |j_eps * xi - xi|`` by Gauss-Legendre panels split at every jump.

    The integration window extends ``12/sqrt(eps)`` past the support.
    """
    from .quadrature import gauss_legendre

    a, b = xi.support
    pad = 12.0 / sqrt(epsilon)
    edges = np.concatenate([[a - pad], xi.breakpoints, [b + pad]])
    # split each piece near its ends where the error is concentrated
    fine = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        cut = min(pad, 0.5 * (hi - lo))
        pts = sorted({lo, lo + cut / 8, lo + cut, hi - cut, hi - cut / 8, hi})
        fine.extend(zip(pts[:-1], pts[1:]))
    total = 0.0
    for lo, hi in fine:
        if hi <= lo:
            continue
        x, w = gauss_legendre(points_per_piece, float(lo), float(hi))
        total += float(np.sum(w * np.abs(smoothed_shift(xi, epsilon, x) - xi(x))))
    return total


def approximate_identity_l1_prediction(xi: StepFunction, epsilon: float) -> float:
    """``sum |jump| / sqrt(pi eps)``, the large-``eps`` value for well separated jumps."""
    jumps = np.diff(xi.values)
    return float(np.sum(np.abs(jumps))) / sqrt(pi * epsilon)
