"""Quadrature rules: Gauss-Legendre, simplex rules and adaptive Gauss-Kronrod."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import Callable, Sequence

import numpy as np

from .errors import QuadratureBudgetExceeded


@dataclass(frozen=True)
class QuadratureConfig:
    """Knobs shared by the quadrature-based evaluation paths.

    ``nodes`` is the minimum Gauss-Legendre count per simplex axis; it is raised
    per Fourier atom when the phase oscillates quickly.  ``tol`` is the accepted
    error estimate, ``max_evals`` caps adaptive integrand evaluations.
    """

    nodes: int = 32
    max_nodes: int = 256
    density_nodes: int = 256
    tol: float = 1e-6
    adaptive_tol: float = 1e-11
    max_evals: int = 10_000


@lru_cache(maxsize=None)
def gauss_legendre(n: int, a: float = 0.0, b: float = 1.0) -> tuple:
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    x = a + half * (x + 1.0)
    w = half * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def simplex_rule(dim: int, nodes: int) -> tuple:
    """Tensor Gauss-Legendre rule on ``{1 >= t_1 >= ... >= t_dim >= 0}``.

    Uses the collapsed map ``t_k = u_1 u_2 ... u_k``; weights sum to ``1/dim!``.
    Returns ``(t, w)`` with ``t`` of shape ``(P, dim)``.
    """
    if dim == 0:
        t = np.zeros((1, 0))
        w = np.ones(1)
    else:
        u, wu = gauss_legendre(nodes)
        grids = np.meshgrid(*([u] * dim), indexing="ij")
        wgrids = np.meshgrid(*([wu] * dim), indexing="ij")
        U = np.stack([g.ravel() for g in grids], axis=1)
        W = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
        t = np.cumprod(U, axis=1)
        # Jacobian of the collapsed map: prod_k u_k^(dim - k)
        jac = np.prod(U ** np.arange(dim - 1, -1, -1)[None, :], axis=1)
        w = W * jac
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def barycentric_weights(t: np.ndarray) -> np.ndarray:
    """Map ordered simplex coordinates to the weights ``(1-t_1, t_1-t_2, ..., t_n)``."""
    ones = np.ones((t.shape[0], 1))
    zeros = np.zeros((t.shape[0], 1))
    padded = np.hstack([ones, t, zeros])
    return padded[:, :-1] - padded[:, 1:]


def simplex_volume(dim: int) -> float:
    return 1.0 / factorial(dim)


# Gauss-Kronrod 7/15 pair (QUADPACK qk15 constants).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_GK_X = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_GK_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss nodes are the odd-indexed Kronrod abscissae (xgk[1], xgk[3], ...).
_GK_WG = np.zeros(15)
_GK_WG[[1, 3, 5]] = _WG[:3]
_GK_WG[7] = _WG[3]
_GK_WG[[9, 11, 13]] = _WG[:3][::-1]


def gauss_kronrod(f: Callable[[float], complex], a: float, b: float) -> tuple:
    """One G7/K15 panel. Returns ``(kronrod_value, |kronrod - gauss|)``."""
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    vals = np.array([f(c + h * x) for x in _GK_X])
    k = h * np.dot(_GK_WK, vals)
    g = h * np.dot(_GK_WG, vals)
    return k, abs(k - g)


@dataclass(frozen=True)
class AdaptiveResult:
    value: complex
    error: float
    evaluations: int


def adaptive_integrate(
    f: Callable[[float], complex],
    a: float,
    b: float,
    tol: float = 1e-11,
    max_evals: int = 10_000,
    breakpoints: Sequence[float] = (),
) -> AdaptiveResult:
    """Globally adaptive G7/K15 integration over ``[a, b]``.

    The panel with the largest error estimate is bisected until the summed
    estimate drops below ``tol``.  ``breakpoints`` seed the initial panels so
    known discontinuities sit on panel edges.
    """
    if b == a:
        return AdaptiveResult(0.0, 0.0, 0)
    edges = sorted({a, b, *[p for p in breakpoints if a < p < b]})
    heap = []
    evals = 0
    total = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = gauss_kronrod(f, lo, hi)
        evals += 15
        heap.append((-e, lo, hi, v))
        total += v
        err += e
    heapq.heapify(heap)
    while err > tol:
        if evals + 30 > max_evals:
            raise QuadratureBudgetExceeded(
                f"adaptive quadrature error {err:.3g} above {tol:.3g} after {evals} evaluations"
            )
        neg_e, lo, hi, v = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            # panel has collapsed to floating-point resolution
            heapq.heappush(heap, (0.0, lo, hi, v))
            err += neg_e
            continue
        v1, e1 = gauss_kronrod(f, lo, mid)
        v2, e2 = gauss_kronrod(f, mid, hi)
        evals += 30
        total += v1 + v2 - v
        err += e1 + e2 + neg_e
        heapq.heappush(heap, (-e1, lo, mid, v1))
        heapq.heappush(heap, (-e2, mid, hi, v2))
    # re-sum from panels to shed accumulated cancellation in the running total
    total = sum(item[3] for item in heap)
    err = sum(-item[0] for item in heap)
    return AdaptiveResult(total, err, evals)
