"""Spectral shift function and spectral averaging along ``H_r = H + rV``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import OrderExceeded, ShapeMismatch
from .functions import WienerFunction
from .linalg import BlockOperator, apply_function, eigh, trace_norm, weighted_count, weighted_trace
from .quadrature import QuadratureConfig, adaptive_integrate


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function.

    ``values[0]`` holds on ``(-inf, b_0)``, ``values[k]`` on ``[b_{k-1}, b_k)``
    and ``values[-1]`` on ``[b_last, inf)``.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.ndim != 1 or v.shape != (b.size + 1,):
            raise ValueError("need one more value than breakpoints")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly ascending")
        b.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    def __call__(self, lam):
        idx = np.searchsorted(self.breakpoints, lam, side="right")
        return self.values[idx]

    def _pieces(self):
        """Finite pieces ``(left, right, value)``; tails must vanish."""
        if self.values[0] != 0 or self.values[-1] != 0:
            raise ValueError("step function is not integrable (non-zero tail)")
        b = self.breakpoints
        return b[:-1], b[1:], self.values[1:-1]

    def integral(self, a: float = -np.inf, b: float = np.inf) -> float:
        lo, hi, v = self._pieces()
        left = np.clip(lo, a, b)
        right = np.clip(hi, a, b)
        return float(np.sum(v * (right - left)))

    def l1_norm(self) -> float:
        lo, hi, v = self._pieces()
        return float(np.sum(np.abs(v) * (hi - lo)))

    def integrate_increments(self, F: Callable) -> complex:
        """``int F'(l) xi(l) dl = sum_k xi_k (F(b_{k+1}) - F(b_k))``, with no quadrature."""
        lo, hi, v = self._pieces()
        if v.size == 0:
            return 0.0
        Fb = np.asarray(F(self.breakpoints), dtype=complex)
        return complex(np.sum(v * (Fb[1:] - Fb[:-1])))

    @property
    def support(self) -> tuple:
        if self.breakpoints.size == 0:
            return (0.0, 0.0)
        return float(self.breakpoints[0]), float(self.breakpoints[-1])


def _check_pair(H: BlockOperator, V: BlockOperator) -> None:
    if H.dims != V.dims or H.weights != V.weights:
        raise ShapeMismatch(f"block structure {H.dims}/{H.weights} vs {V.dims}/{V.weights}")
    if not (H.hermitian_flag and V.hermitian_flag):
        raise ShapeMismatch("H and V must be flagged Hermitian")


def counting_step(A: BlockOperator) -> StepFunction:
    """``N_A(l) = tau(E_A(-inf, l])`` as a step function (non-zero right tail)."""
    d = eigh(A)
    pts = np.unique(d.spectrum())
    vals = [0.0] + [_count_le(d, p) for p in pts]
    return StepFunction(pts, np.array(vals))


def _count_le(d, lam: float) -> float:
    counts = [int(np.searchsorted(ev, lam, side="right")) for ev in d.eigenvalues]
    return weighted_count(counts, d.weights)


def xi_counting(H: BlockOperator, V: BlockOperator) -> StepFunction:
    """``xi_{H+V,H}(l) = N_H(l) - N_{H+V}(l)``."""
    _check_pair(H, V)
    d0, d1 = eigh(H), eigh(H + V)
    pts = np.unique(np.concatenate([d0.spectrum(), d1.spectrum()]))
    # integer differences per block, weighted last, so equal counts cancel exactly
    vals = [0.0]
    for p in pts:
        diff = [int(np.searchsorted(a, p, side="right")) - int(np.searchsorted(b, p, side="right"))
                for a, b in zip(d0.eigenvalues, d1.eigenvalues)]
        vals.append(weighted_count(diff, H.weights))
    vals = np.array(vals)
    # drop breakpoints where the value does not change
    keep = np.concatenate([[True], vals[1:] != vals[:-1]])
    keep_pts = keep[1:]
    return StepFunction(pts[keep_pts], vals[np.concatenate([[True], keep_pts])])


def krein_trace_check(f: WienerFunction, H: BlockOperator, V: BlockOperator) -> float:
    """``|tau(f(H+V) - f(H)) - int f' xi|``."""
    if f.max_order < 1:
        raise OrderExceeded("the trace formula needs f in C^1_+")
    _check_pair(H, V)
    lhs = weighted_trace(apply_function(f, eigh(H + V)) - apply_function(f, eigh(H)))
    rhs = xi_counting(H, V).integrate_increments(f)
    return abs(lhs - rhs)


def support_projection_trace(V: BlockOperator, sign: int, tol: float | None = None) -> float:
    """``tau`` of the support projection of ``V_+`` (``sign=1``) or ``V_-`` (``sign=-1``)."""
    d = eigh(V)
    if tol is None:
        tol = 1e-12 * (1.0 + d.spectral_radius)
    counts = [int(np.count_nonzero(sign * lam > tol)) for lam in d.eigenvalues]
    return weighted_count(counts, d.weights)


@dataclass(frozen=True)
class XiBoundsReport:
    l1_norm: float
    trace_norm: float
    integral: float
    trace: float
    xi_min: float
    xi_max: float
    lower_bound: float
    upper_bound: float
    tol: float = 1e-9

    @property
    def l1_ok(self) -> bool:
        return self.l1_norm <= self.trace_norm + self.tol

    @property
    def integral_ok(self) -> bool:
        return abs(self.integral - self.trace) <= self.tol

    @property
    def pointwise_ok(self) -> bool:
        return self.lower_bound - self.tol <= self.xi_min and self.xi_max <= self.upper_bound + self.tol

    @property
    def ok(self) -> bool:
        return self.l1_ok and self.integral_ok and self.pointwise_ok


def xi_bounds_check(H: BlockOperator, V: BlockOperator, tol: float = 1e-9) -> XiBoundsReport:
    xi = xi_counting(H, V)
    return XiBoundsReport(
        l1_norm=xi.l1_norm(),
        trace_norm=trace_norm(V),
        integral=xi.integral(),
        trace=weighted_trace(V).real,
        xi_min=float(np.min(xi.values)),
        xi_max=float(np.max(xi.values)),
        lower_bound=-support_projection_trace(V, -1),
        upper_bound=support_projection_trace(V, 1),
        tol=tol,
    )


# -- spectral averaging -------------------------------------------------------


def level_crossings(H: BlockOperator, V: BlockOperator, lam: float, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Parameters ``r`` in ``(lo, hi)`` where ``lam`` is an eigenvalue of ``H + rV``.

    Per block these are the real roots of ``det(H - lam + rV)``, found as
    generalised eigenvalues of the pencil ``(H - lam, -V)``.
    """
    roots = []
    for h, v in zip(H.blocks, V.blocks):
        a = h - lam * np.eye(h.shape[0])
        with np.errstate(all="ignore"):
            w = scipy.linalg.eigvals(a, -v)
        w = w[np.isfinite(w)]
        real = w[np.abs(w.imag) <= 1e-8 * (1.0 + np.abs(w.real))].real
        roots.extend(r for r in real if lo < r < hi)
    return np.unique(np.array(roots, dtype=float))


def averaged_integrand(H: BlockOperator, V: BlockOperator, a: float, b: float) -> Callable[[float], float]:
    """``r -> tau(V E^{H_r}_{(a,b)})`` with an open interval."""

    def g(r: float) -> float:
        total = 0.0
        for h, v, w in zip(H.blocks, V.blocks, H.weights):
            lam, u = np.linalg.eigh(h + r * v)
            sel = u[:, (lam > a) & (lam < b)]
            # tr(V P) with P = sel sel*
            total += w * float(np.real(np.einsum("ij,ik,kj->", sel.conj(), v, sel)))
        return total

    return g


def birman_solomyak_measure(H: BlockOperator, V: BlockOperator, a: float, b: float,
                            quad: QuadratureConfig | None = None) -> float:
    """``Xi(a, b) = int_0^1 tau(V E^{H + rV}_{(a,b)}) dr`` by adaptive Gauss-Kronrod.

    Crossings of ``a`` and ``b`` by the spectrum of ``H_r`` make the integrand
    jump; they are located as roots of ``det(H - a + rV)`` and used as panel
    edges, and the adaptive bisection absorbs any that are missed.
    """
    if not a < b:
        raise ValueError("need a < b")
    _check_pair(H, V)
    quad = quad or QuadratureConfig()
    cuts = np.union1d(level_crossings(H, V, a), level_crossings(H, V, b))
    res = adaptive_integrate(averaged_integrand(H, V, a, b), 0.0, 1.0, tol=quad.adaptive_tol,
                             max_evals=quad.max_evals, breakpoints=tuple(cuts))
    return float(np.real(res.value))


@dataclass(frozen=True, eq=False)
class AveragedMeasure:
    """Interval function ``(a, b) -> Xi(a, b)``."""

    evaluator: Callable[[float, float], float]
    quadrature_nodes: int = 15

    @classmethod
    def birman_solomyak(cls, H: BlockOperator, V: BlockOperator, quad: QuadratureConfig | None = None):
        return cls(lambda a, b: birman_solomyak_measure(H, V, a, b, quad))

    def __call__(self, a: float, b: float) -> float:
        return self.evaluator(a, b)

    def on_grid(self, edges: Sequence[float]) -> np.ndarray:
        e = np.asarray(edges, dtype=float)
        return np.array([self(lo, hi) for lo, hi in zip(e[:-1], e[1:])])


def averaging_identity_check(H: BlockOperator, V: BlockOperator, edges: Sequence[float],
                             quad: QuadratureConfig | None = None) -> float:
    """``max_k |Xi(e_k, e_{k+1}) - int_{e_k}^{e_{k+1}} xi|`` over consecutive grid edges."""
    xi = xi_counting(H, V)
    Xi = AveragedMeasure.birman_solomyak(H, V, quad).on_grid(edges)
    e = np.asarray(edges, dtype=float)
    direct = np.array([xi.integral(lo, hi) for lo, hi in zip(e[:-1], e[1:])])
    return float(np.max(np.abs(Xi - direct))) if direct.size else 0.0


def spectral_window(H: BlockOperator, V: BlockOperator, pad: float = 0.5) -> tuple:
    """An interval containing the spectra of ``H`` and ``H + V``."""
    s = np.concatenate([eigh(H).spectrum(), eigh(H + V).spectrum()])
    return float(s.min() - pad), float(s.max() + pad)


def count_discontinuities(H: BlockOperator, V: BlockOperator, lam: float, samples: int = 4001) -> tuple:
    """Jumps in ``r -> tau(V E^{H_r}(-inf, lam])`` on ``[0, 1]``, detected by sampling.

    Returns per-block numbers of sample intervals where the eigenvalue count
    below ``lam`` changes.  Each block of dimension ``d`` allows at most ``d``.
    """
    r = np.linspace(0.0, 1.0, samples)
    jumps = []
    for h, v in zip(H.blocks, V.blocks):
        counts = np.array([np.count_nonzero(np.linalg.eigvalsh(h + t * v) <= lam) for t in r])
        jumps.append(int(np.count_nonzero(np.diff(counts))))
    return tuple(jumps)
