"""Differences and derivatives of operator functions ``H -> f(H)``."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import pi, sqrt

import numpy as np

from .errors import OrderExceeded, ShapeMismatch
from .functions import WienerFunction, fourier_measure, total_variation
from .linalg import BlockOperator, apply_function, eigh, ideal_norm, trace_norm, uniform_norm
from .moi import DividedDifferenceKernel, MOIRequest, moi_spectral
from .quadrature import gauss_legendre


def _require_hermitian_pair(A: BlockOperator, B: BlockOperator) -> None:
    if A.dims != B.dims or A.weights != B.weights:
        raise ShapeMismatch(f"block structure {A.dims}/{A.weights} vs {B.dims}/{B.weights}")
    if not (A.hermitian_flag and B.hermitian_flag):
        raise ShapeMismatch("operators must be flagged Hermitian")


def _require_order(f: WienerFunction, needed: int) -> None:
    if f.max_order < needed:
        raise OrderExceeded(f"{f} is certified only up to order {f.max_order}, {needed} needed")


def exp_i(s: float, A: BlockOperator, decomp=None) -> BlockOperator:
    """``exp(isA)`` through the spectral decomposition."""
    d = decomp or eigh(A)
    return apply_function(lambda lam: np.exp(1j * s * lam), d)


def duhamel_difference(s: float, A: BlockOperator, B: BlockOperator, nodes: int = 64) -> BlockOperator:
    """``int_0^s exp(i(s-t)A) i(A-B) exp(itB) dt`` by Gauss-Legendre quadrature.

    This equals ``exp(isA) - exp(isB)``.
    """
    _require_hermitian_pair(A, B)
    dA, dB = eigh(A), eigh(B)
    diff = (A - B) * 1j
    acc = [np.zeros_like(b) for b in A.blocks]
    if s == 0:
        return A.with_blocks(acc)
    t, w = gauss_legendre(nodes, 0.0, float(s))
    for tk, wk in zip(t, w):
        # exp(i(s-t)A) and exp(itB) are diagonal in the respective eigenbases
        for b, (UA, lA, UB, lB) in enumerate(zip(dA.eigenvectors, dA.eigenvalues, dB.eigenvectors, dB.eigenvalues)):
            left = (UA * np.exp(1j * (s - tk) * lA)) @ UA.conj().T
            right = (UB * np.exp(1j * tk * lB)) @ UB.conj().T
            acc[b] = acc[b] + wk * (left @ diff.blocks[b] @ right)
    return A.with_blocks(acc)


def operator_difference(f: WienerFunction, H: BlockOperator, V: BlockOperator) -> BlockOperator:
    """``T^{H+V,H}_{f^[1]}(V)``, which equals ``f(H+V) - f(H)``."""
    _require_order(f, 1)
    _require_hermitian_pair(H, V)
    req = MOIRequest((H + V, H), (V,), DividedDifferenceKernel(f, 1))
    return moi_spectral(req).value


def function_difference(f: WienerFunction, H: BlockOperator, V: BlockOperator) -> BlockOperator:
    """``f(H+V) - f(H)`` straight from the functional calculus."""
    return apply_function(f, eigh(H + V)) - apply_function(f, eigh(H))


def daletskii_krein_residual(f: WienerFunction, H: BlockOperator, V: BlockOperator) -> float:
    return uniform_norm(function_difference(f, H, V) - operator_difference(f, H, V))


@dataclass(frozen=True, eq=False)
class FrechetRequest:
    f: WienerFunction
    base: BlockOperator
    directions: tuple

    def __post_init__(self):
        dirs = tuple(self.directions)
        object.__setattr__(self, "directions", dirs)
        if not dirs:
            raise ShapeMismatch("at least one direction is required")
        for v in dirs:
            _require_hermitian_pair(self.base, v)
        # C^{n+1}_+ membership is what makes the n-th derivative a Frechet derivative
        _require_order(self.f, self.order + 1)

    @property
    def order(self) -> int:
        return len(self.directions)


def multiple_difference(f: WienerFunction, n: int, operators, directions, decomps=None) -> BlockOperator:
    """``T^{H_0..H_n}_{f^[n]}(V_1..V_n)`` on the spectral path."""
    req = MOIRequest(tuple(operators), tuple(directions), DividedDifferenceKernel(f, n))
    return moi_spectral(req, decomps).value


def frechet_derivative(req: FrechetRequest) -> BlockOperator:
    """``sum over permutations sigma of T^{H..H}_{f^[n]}(V_sigma(1), ..., V_sigma(n))``."""
    n = req.order
    H = req.base
    d = eigh(H)
    decomps = [d] * (n + 1)
    total = None
    for perm in itertools.permutations(range(n)):
        dirs = tuple(req.directions[i] for i in perm)
        term = multiple_difference(req.f, n, (H,) * (n + 1), dirs, decomps)
        total = term if total is None else total + term
    return total


def _min_gap(H: BlockOperator) -> float:
    lam = np.sort(eigh(H).spectrum())
    return float(np.min(np.diff(lam))) if lam.size > 1 else np.inf


def central_difference(f: WienerFunction, H: BlockOperator, V: BlockOperator, h: float = 1e-4,
                       richardson: bool | None = None) -> BlockOperator:
    """``(f(H+hV) - f(H-hV)) / 2h``; Richardson-extrapolated on near-degenerate spectra."""
    _require_hermitian_pair(H, V)

    def cd(step):
        return (apply_function(f, eigh(H + V * step)) - apply_function(f, eigh(H - V * step))) * (0.5 / step)

    if richardson is None:
        richardson = _min_gap(H) < 1e-6
    if not richardson:
        return cd(h)
    return (cd(h * 0.5) * 4.0 - cd(h)) * (1.0 / 3.0)


def taylor_polynomial(f: WienerFunction, H: BlockOperator, V: BlockOperator, n: int) -> BlockOperator:
    """``sum_{k=1}^n T^{H..H}_{f^[k]}(V, ..., V)``."""
    d = eigh(H)
    total = None
    for k in range(1, n + 1):
        term = multiple_difference(f, k, (H,) * (k + 1), (V,) * k, [d] * (k + 1))
        total = term if total is None else total + term
    return total


def taylor_remainder(f: WienerFunction, H: BlockOperator, V: BlockOperator, n: int,
                     norm: str = "uniform") -> float:
    """``||f(H+V) - f(H) - sum_{k<=n} T_{f^[k]}(V,...,V)||``."""
    _require_order(f, n + 1)
    _require_hermitian_pair(H, V)
    rem = function_difference(f, H, V) - taylor_polynomial(f, H, V, n)
    return ideal_norm(rem, norm)


@dataclass(frozen=True)
class SlopeFit:
    scales: tuple
    remainders: tuple
    slope: float


def taylor_slope(f: WienerFunction, H: BlockOperator, V: BlockOperator, n: int,
                 scales=(1.0, 0.5, 0.25, 0.125), norm: str = "uniform") -> SlopeFit:
    """Least-squares slope of ``log remainder(tV)`` against ``log ||tV||``."""
    rems = [taylor_remainder(f, H, V * t, n, norm) for t in scales]
    x = np.log(np.asarray(scales) * uniform_norm(V))
    y = np.log(np.asarray(rems))
    slope = float(np.polyfit(x, y, 1)[0])
    return SlopeFit(tuple(scales), tuple(rems), slope)


def derivative_lipschitz_probe(f: WienerFunction, H: BlockOperator, X: BlockOperator, V: BlockOperator,
                               norm: str = "uniform") -> tuple:
    """``(||Df(H+X)(V) - Df(H)(V)||, ||m_f''|| ||V|| ||X||)`` in the chosen ideal norm.

    ``||V||`` is measured in the ideal and ``||X||`` in the uniform norm.
    """
    _require_order(f, 2)
    d1 = frechet_derivative(FrechetRequest(f, H + X, (V,)))
    d0 = frechet_derivative(FrechetRequest(f, H, (V,)))
    lhs = ideal_norm(d1 - d0, norm)
    rhs = total_variation(fourier_measure(f, 2)) * ideal_norm(V, norm) * uniform_norm(X)
    return lhs, rhs


def sharp_lipschitz_constant(f: WienerFunction) -> float:
    """``(2 pi)^{-1/2} ||m_f''||``, the constant matching our Fourier normalisation."""
    return total_variation(fourier_measure(f, 2)) / sqrt(2 * pi)


def telescoping_residuals(f: WienerFunction, H: BlockOperator, Ht: BlockOperator, directions) -> list:
    """Check the single-slot substitution identity behind higher derivatives.

    For ``j = 0..n`` the difference of ``T_{f^[n]}(V_1..V_n)`` with operators
    ``(Ht,..,Ht, H,..,H)`` (``j+1`` resp. ``j`` leading copies of ``Ht``) equals
    ``T_{f^[n+1]}`` with operators ``Ht`` in slots ``0..j`` and ``H`` after, and
    ``V_{n+1} = Ht - H`` inserted after ``V_j``.  The sum of these telescopes to
    the full difference.  Returns the residual for each ``j`` and for the sum.
    """
    dirs = tuple(directions)
    n = len(dirs)
    _require_order(f, n + 1)
    W = Ht - H
    dH, dHt = eigh(H), eigh(Ht)
    residuals = []
    total = None
    for j in range(n + 1):
        ops_a = (Ht,) * (j + 1) + (H,) * (n - j)
        ops_b = (Ht,) * j + (H,) * (n + 1 - j)
        dec_a = [dHt] * (j + 1) + [dH] * (n - j)
        dec_b = [dHt] * j + [dH] * (n + 1 - j)
        diff = (multiple_difference(f, n, ops_a, dirs, dec_a)
                - multiple_difference(f, n, ops_b, dirs, dec_b))
        ops_c = (Ht,) * (j + 1) + (H,) * (n + 1 - j)
        dec_c = [dHt] * (j + 1) + [dH] * (n + 1 - j)
        dirs_c = dirs[:j] + (W,) + dirs[j:]
        pred = multiple_difference(f, n + 1, ops_c, dirs_c, dec_c)
        residuals.append(uniform_norm(diff - pred))
        total = diff if total is None else total + diff
    full = (multiple_difference(f, n, (Ht,) * (n + 1), dirs, [dHt] * (n + 1))
            - multiple_difference(f, n, (H,) * (n + 1), dirs, [dH] * (n + 1)))
    residuals.append(uniform_norm(full - total))
    return residuals


def trace_norm_report(X: BlockOperator) -> dict:
    return {"uniform": uniform_norm(X), "trace": trace_norm(X)}
