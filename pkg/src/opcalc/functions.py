"""Function families with certified Fourier representations.

Every family member ``f`` is written as

    f(x) = (2 pi)^(-1/2) * integral exp(i s x) m_f(ds)

for an explicit finite measure ``m_f`` (atoms and/or a density), so that each
derivative ``f^(j)`` has the measure ``(i s)^j m_f(ds)``.  Derivatives are also
available in closed form, which keeps the Fourier representation a checkable
claim rather than the definition.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from math import factorial, pi, sqrt
from typing import Sequence

import numpy as np

from .errors import ConfigParse, OrderExceeded, QuadratureBudgetExceeded
from .quadrature import QuadratureConfig, barycentric_weights, gauss_legendre, simplex_rule

SQRT_2PI = sqrt(2.0 * pi)


class Family(str, enum.Enum):
    COMPLEX_EXPONENTIAL = "complex_exponential"
    SINE = "sine"
    COSINE = "cosine"
    GAUSSIAN = "gaussian"
    LORENTZIAN = "lorentzian"
    FINITE_TRIG_COMBO = "finite_trig_combo"


_PARAM_NAMES = {
    Family.COMPLEX_EXPONENTIAL: ("a",),
    Family.SINE: ("a",),
    Family.COSINE: ("a",),
    Family.GAUSSIAN: ("sigma",),
    Family.LORENTZIAN: ("a",),
    Family.FINITE_TRIG_COMBO: ("terms",),
}


def _parse_complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigParse(f"complex value must be [re, im], got {value!r}")
        return complex(float(value[0]), float(value[1]))
    return complex(value)


@dataclass(frozen=True)
class WienerFunction:
    """A member of one of the shipped families, certified in ``C^max_order_+``.

    Lorentzian: ``a^2 / (a^2 + x^2)``.  Gaussian: ``exp(-x^2 / (2 sigma^2))``.
    Finite trig combination: ``sum_k c_k exp(i s_k x)`` with ``terms = ((c_k, s_k), ...)``.
    """

    family: Family
    params: tuple = field(default=())
    max_order: int = 3

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        params = dict(self.params)
        expected = _PARAM_NAMES[fam]
        if set(params) != set(expected):
            raise ConfigParse(f"{fam.value} expects parameters {expected}, got {tuple(params)}")
        if fam is Family.FINITE_TRIG_COMBO:
            terms = tuple((_parse_complex(c), float(s)) for c, s in params["terms"])
            if not terms:
                raise ConfigParse("finite_trig_combo needs at least one term")
            params["terms"] = terms
        else:
            (name,) = expected
            params[name] = float(params[name])
            if fam in (Family.GAUSSIAN, Family.LORENTZIAN) and not params[name] > 0:
                raise ConfigParse(f"{fam.value} parameter {name} must be positive")
        if int(self.max_order) < 0:
            raise ConfigParse("max_order must be non-negative")
        object.__setattr__(self, "params", tuple(sorted(params.items())))
        object.__setattr__(self, "max_order", int(self.max_order))

    # -- constructors -----------------------------------------------------

    @classmethod
    def complex_exponential(cls, a: float, max_order: int = 3) -> "WienerFunction":
        return cls(Family.COMPLEX_EXPONENTIAL, (("a", a),), max_order)

    @classmethod
    def sine(cls, a: float, max_order: int = 3) -> "WienerFunction":
        return cls(Family.SINE, (("a", a),), max_order)

    @classmethod
    def cosine(cls, a: float, max_order: int = 3) -> "WienerFunction":
        return cls(Family.COSINE, (("a", a),), max_order)

    @classmethod
    def gaussian(cls, sigma: float, max_order: int = 3) -> "WienerFunction":
        return cls(Family.GAUSSIAN, (("sigma", sigma),), max_order)

    @classmethod
    def lorentzian(cls, a: float, max_order: int = 3) -> "WienerFunction":
        return cls(Family.LORENTZIAN, (("a", a),), max_order)

    @classmethod
    def finite_trig_combo(cls, terms, max_order: int = 3) -> "WienerFunction":
        return cls(Family.FINITE_TRIG_COMBO, (("terms", tuple(terms)),), max_order)

    @classmethod
    def from_spec(cls, spec: dict) -> "WienerFunction":
        try:
            family = Family(spec["family"])
            params = spec.get("params", {})
            max_order = spec.get("max_order", 3)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigParse(f"bad function spec {spec!r}: {exc}") from exc
        if not isinstance(params, dict):
            raise ConfigParse(f"params must be an object, got {params!r}")
        return cls(family, tuple(params.items()), max_order)

    def to_spec(self) -> dict:
        params = dict(self.params)
        if self.family is Family.FINITE_TRIG_COMBO:
            params["terms"] = [[[c.real, c.imag], s] for c, s in params["terms"]]
        return {"family": self.family.value, "params": params, "max_order": self.max_order}

    def param(self, name: str):
        return dict(self.params)[name]

    def __str__(self) -> str:
        if self.family is Family.FINITE_TRIG_COMBO:
            return f"finite_trig_combo[{len(self.param('terms'))}]"
        (name, value), = self.params
        return f"{self.family.value}({name}={value:g})"

    # -- properties used by the numerics ----------------------------------

    @property
    def is_real(self) -> bool:
        """Whether ``f`` is real-valued on the real line."""
        if self.family is Family.COMPLEX_EXPONENTIAL:
            return self.param("a") == 0.0
        if self.family is Family.FINITE_TRIG_COMBO:
            return _trig_combo_is_real(self.param("terms"))
        return True

    @property
    def sup_norm(self) -> float:
        """An upper bound for ``sup |f|`` over the real line."""
        if self.family is Family.FINITE_TRIG_COMBO:
            return float(sum(abs(c) for c, _ in self.param("terms")))
        return 1.0

    @property
    def taylor_radius(self) -> float:
        """Radius of convergence of the Taylor series at real points."""
        if self.family is Family.LORENTZIAN:
            return self.param("a")
        return np.inf

    def __call__(self, x):
        return derivative(self, x, 0)


def _trig_combo_is_real(terms) -> bool:
    merged: dict = {}
    for c, s in terms:
        merged[s] = merged.get(s, 0) + c
    return all(abs(merged.get(s, 0) - np.conj(merged.get(-s, 0))) == 0 for s in merged)


# -- closed-form derivatives ------------------------------------------------


def derivative(f: WienerFunction, x, j: int) -> np.ndarray:
    """Analytic ``f^(j)(x)`` for any ``j >= 0`` (no class check)."""
    x = np.asarray(x, dtype=float)
    fam = f.family
    if fam is Family.COMPLEX_EXPONENTIAL:
        a = f.param("a")
        return (1j * a) ** j * np.exp(1j * a * x)
    if fam is Family.SINE:
        a = f.param("a")
        return (a ** j * np.sin(a * x + j * pi / 2)).astype(complex)
    if fam is Family.COSINE:
        a = f.param("a")
        return (a ** j * np.cos(a * x + j * pi / 2)).astype(complex)
    if fam is Family.FINITE_TRIG_COMBO:
        out = np.zeros(x.shape, dtype=complex)
        for c, s in f.param("terms"):
            out = out + c * (1j * s) ** j * np.exp(1j * s * x)
        return out
    return taylor_coefficient(f, x, j) * factorial(j)


def taylor_coefficient(f: WienerFunction, x, j: int) -> np.ndarray:
    """``f^(j)(x) / j!`` computed without forming large factorials."""
    x = np.asarray(x, dtype=float)
    fam = f.family
    if fam is Family.GAUSSIAN:
        sigma = f.param("sigma")
        y = x / sigma
        # g_k = He_k(y) / k!, with He_{k+1} = y He_k - k He_{k-1}
        g_prev = np.zeros_like(y)
        g = np.ones_like(y)
        for k in range(j):
            g_prev, g = g, (y * g - g_prev) / (k + 1)
        return ((-1) ** j * g * np.exp(-0.5 * y * y) / sigma ** j).astype(complex)
    if fam is Family.LORENTZIAN:
        a = f.param("a")
        # a^2/(a^2+x^2) = a * Im(1/(x - i a)); d^j/dx^j (x - ia)^-1 = (-1)^j j! (x - ia)^-(j+1)
        return ((-1) ** j * a * np.imag((x - 1j * a) ** (-(j + 1)))).astype(complex)
    return derivative(f, x, j) / factorial(j)


def evaluate(f: WienerFunction, x, order: int = 0):
    """``f^(order)(x)``; raises ``OrderExceeded`` above ``f.max_order``."""
    if order > f.max_order:
        raise OrderExceeded(f"order {order} exceeds certified class C^{f.max_order}_+ of {f}")
    if order < 0:
        raise ValueError("order must be non-negative")
    out = derivative(f, x, order)
    return complex(out) if np.ndim(out) == 0 else out


# -- Fourier measures -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FourierMeasure:
    """Finite complex measure: point masses plus an optional sampled density.

    The density is stored on quadrature nodes with their weights, so
    ``integral g dm ~= sum g(node) * value * weight``.
    """

    atom_locations: np.ndarray
    atom_masses: np.ndarray
    density_nodes: np.ndarray | None = None
    density_values: np.ndarray | None = None
    density_weights: np.ndarray | None = None
    truncation_radius: float = 0.0

    def atomized(self) -> tuple:
        """All mass as ``(locations, masses)``, density nodes included."""
        if self.density_nodes is None:
            return self.atom_locations, self.atom_masses
        locs = np.concatenate([self.atom_locations, self.density_nodes])
        masses = np.concatenate([self.atom_masses, self.density_values * self.density_weights])
        return locs, masses

    def lift(self, j: int) -> "FourierMeasure":
        """Measure ``(i s)^j dm(s)`` of the ``j``-th derivative."""
        if j == 0:
            return self
        atoms = self.atom_masses * (1j * self.atom_locations) ** j
        dens = None if self.density_nodes is None else self.density_values * (1j * self.density_nodes) ** j
        return FourierMeasure(
            self.atom_locations, atoms, self.density_nodes, dens, self.density_weights, self.truncation_radius
        )

    def transform(self, x) -> np.ndarray:
        """``(2 pi)^(-1/2) integral exp(i s x) dm(s)``."""
        x = np.asarray(x, dtype=float)
        locs, masses = self.atomized()
        return np.exp(1j * np.multiply.outer(x, locs)) @ masses / SQRT_2PI


def total_variation(m: FourierMeasure) -> float:
    tv = float(np.sum(np.abs(m.atom_masses)))
    if m.density_nodes is not None:
        tv += float(np.sum(np.abs(m.density_values) * m.density_weights))
    return tv


def default_truncation_radius(f: WienerFunction) -> float:
    if f.family is Family.GAUSSIAN:
        return 12.0 / f.param("sigma")
    if f.family is Family.LORENTZIAN:
        return 40.0 / f.param("a")
    return 0.0


def _density(f: WienerFunction, s: np.ndarray) -> np.ndarray:
    if f.family is Family.GAUSSIAN:
        sigma = f.param("sigma")
        return (sigma * np.exp(-0.5 * (sigma * s) ** 2)).astype(complex)
    a = f.param("a")
    return (a * sqrt(pi / 2) * np.exp(-a * np.abs(s))).astype(complex)


def fourier_measure(
    f: WienerFunction,
    order: int = 0,
    truncation_radius: float | None = None,
    density_nodes: int = 256,
) -> FourierMeasure:
    """Measure ``m`` with ``f^(order)(x) = (2 pi)^(-1/2) integral exp(isx) dm(s)``.

    Densities are truncated to ``[-R, R]`` and sampled on Gauss-Legendre nodes,
    half on each side of the origin (the Lorentzian density has a kink there).
    """
    if order > f.max_order:
        raise OrderExceeded(f"order {order} exceeds certified class C^{f.max_order}_+ of {f}")
    fam = f.family
    empty = np.zeros(0)
    if fam is Family.COMPLEX_EXPONENTIAL:
        base = FourierMeasure(np.array([f.param("a")]), np.array([SQRT_2PI + 0j]))
    elif fam is Family.SINE:
        a = f.param("a")
        c = SQRT_2PI / 2j
        base = FourierMeasure(np.array([a, -a]), np.array([c, -c]))
    elif fam is Family.COSINE:
        a = f.param("a")
        c = SQRT_2PI / 2 + 0j
        base = FourierMeasure(np.array([a, -a]), np.array([c, c]))
    elif fam is Family.FINITE_TRIG_COMBO:
        terms = f.param("terms")
        base = FourierMeasure(
            np.array([s for _, s in terms], dtype=float),
            np.array([SQRT_2PI * c for c, _ in terms], dtype=complex),
        )
    else:
        R = default_truncation_radius(f) if truncation_radius is None else float(truncation_radius)
        half = density_nodes // 2
        xl, wl = gauss_legendre(half, -R, 0.0)
        xr, wr = gauss_legendre(density_nodes - half, 0.0, R)
        nodes = np.concatenate([xl, xr])
        weights = np.concatenate([wl, wr])
        base = FourierMeasure(empty, empty.astype(complex), nodes, _density(f, nodes), weights, R)
    return base.lift(order)


# -- divided differences ----------------------------------------------------


def _cluster_width(f: WienerFunction) -> float:
    return min(0.05, 0.25 * f.taylor_radius)


def _taylor_divided_difference(f: WienerFunction, x: np.ndarray, kmax: int = 60) -> np.ndarray:
    """Divided difference of closely spaced nodes by expansion about their mean.

    ``f[x_0..x_m] = sum_k f^(m+k)(c)/(m+k)! * h_k(x - c)`` with ``h_k`` the
    complete homogeneous symmetric polynomials.  ``x`` has shape ``(T, m+1)``.
    """
    m = x.shape[1] - 1
    c = x.mean(axis=1)
    y = x - c[:, None]
    # h[k] accumulates h_k(y_0..y_i) as nodes are folded in
    h = np.zeros((kmax + 1, x.shape[0]))
    h[0] = 1.0
    for i in range(m + 1):
        for k in range(1, kmax + 1):
            h[k] = h[k] + y[:, i] * h[k - 1]
    total = np.zeros(x.shape[0], dtype=complex)
    small = 0
    for k in range(kmax + 1):
        term = taylor_coefficient(f, c, m + k) * h[k]
        total = total + term
        # h_k vanishes for odd k on symmetric node sets, so one tiny term is not enough
        tiny = np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300))
        small = small + 1 if tiny else 0
        if k >= 2 and small >= 2:
            break
    return total


def divided_difference_array(f: WienerFunction, nodes: np.ndarray) -> np.ndarray:
    """Vectorised ``f^[n]`` for rows of ``nodes`` (shape ``(T, n+1)``).

    Nodes are sorted per row (divided differences are symmetric).  Entries of
    the Newton table whose nodes span less than a cluster width are computed
    by a Taylor expansion; this covers exact repetitions (the confluent rule
    ``f[x,...,x] = f^(k)(x)/k!``) and avoids cancellation for near repeats.
    """
    x = np.sort(np.asarray(nodes, dtype=float), axis=1)
    T, N = x.shape
    width = _cluster_width(f)
    table = [derivative(f, x[:, i], 0).astype(complex) for i in range(N)]
    for k in range(1, N):
        nxt = []
        for i in range(N - k):
            span = x[:, i + k] - x[:, i]
            close = span < width
            val = np.empty(T, dtype=complex)
            far = ~close
            if np.any(far):
                val[far] = (table[i + 1][far] - table[i][far]) / span[far]
            if np.any(close):
                val[close] = _taylor_divided_difference(f, x[close, i:i + k + 1])
            nxt.append(val)
        table = nxt
    return table[0]


def divided_difference(f: WienerFunction, nodes: Sequence[float]) -> complex:
    """``f^[n](x_0, ..., x_n)`` by the Newton recursion with the confluent rule."""
    nodes = np.atleast_1d(np.asarray(nodes, dtype=float))
    if nodes.size < 1:
        raise ValueError("need at least one node")
    n = nodes.size - 1
    if n > f.max_order:
        raise OrderExceeded(f"divided difference of order {n} needs C^{n}_+, {f} is C^{f.max_order}_+")
    return complex(divided_difference_array(f, nodes[None, :])[0])


def fourier_divided_difference_tensor(
    f: WienerFunction,
    spectra: Sequence[np.ndarray],
    quad: QuadratureConfig,
    n_axis_override: int | None = None,
) -> np.ndarray:
    """``f^[n]`` on the grid ``spectra[0] x ... x spectra[n]`` via its simplex integral.

    Evaluates ``integral over Pi^(n) of exp(i sum_k (s_k - s_{k+1}) x_k) d nu_f^(n)``
    with ``s_k = s_0 t_k``: per Fourier atom ``(s_0, c)`` the contribution is
    ``(i s_0)^n c / sqrt(2 pi)`` times a Gauss-Legendre rule on the ordered
    simplex applied to ``exp(i s_0 <barycentric weights, x>)``.
    """
    n = len(spectra) - 1
    locs, masses = fourier_measure(f, 0, density_nodes=quad.density_nodes).atomized()
    keep = masses != 0
    locs, masses = locs[keep], masses[keep]
    spread = max(float(np.ptp(np.concatenate(spectra))), 1e-300)
    shape = tuple(len(s) for s in spectra)
    out = np.zeros(shape, dtype=complex)
    if n == 0:
        return np.exp(1j * np.multiply.outer(spectra[0], locs)) @ masses / SQRT_2PI
    if n_axis_override is not None:
        counts = np.full(locs.shape, n_axis_override)
    else:
        # Gauss-Legendre resolves exp(i w t) on [0,1] once nodes exceed ~w/2
        counts = np.ceil(0.5 * np.abs(locs) * spread + 16).astype(int)
        counts = np.clip(counts, quad.nodes, quad.max_nodes)
    letters = "abcdefgh"[: n + 1]
    subscripts = ",".join("p" + l for l in letters) + "->" + letters
    for cnt in np.unique(counts):
        sel = counts == cnt
        t, w = simplex_rule(n, int(cnt))
        bary = barycentric_weights(np.asarray(t))  # (P, n+1)
        s0 = locs[sel]
        coef = (1j * s0) ** n * masses[sel] / SQRT_2PI  # (A,)
        # points indexed by (atom, simplex node), flattened
        pw = (coef[:, None] * w[None, :]).ravel()
        phase_scale = np.multiply.outer(s0, np.ones(len(w))).ravel()
        chunk = max(1, 200_000 // max(1, int(np.prod(shape))))
        bary_rep = np.tile(bary, (len(s0), 1))
        for start in range(0, pw.size, chunk):
            stop = start + chunk
            sc = phase_scale[start:stop]
            factors = []
            for k in range(n + 1):
                ph = np.multiply.outer(sc * bary_rep[start:stop, k], spectra[k])
                factors.append(np.exp(1j * ph))
            factors[0] = factors[0] * pw[start:stop, None]
            out += np.einsum(subscripts, *factors, optimize=True)
    return out


def divided_difference_via_fourier(
    f: WienerFunction,
    nodes: Sequence[float],
    quad: QuadratureConfig | None = None,
) -> complex:
    """``f^[n](nodes)`` from the Fourier simplex integral (``n <= 3``).

    The error estimate is the change against a rule with two thirds of the
    nodes per axis; ``QuadratureBudgetExceeded`` is raised above ``quad.tol``.
    """
    quad = quad or QuadratureConfig()
    nodes = np.atleast_1d(np.asarray(nodes, dtype=float))
    n = nodes.size - 1
    if n > f.max_order:
        raise OrderExceeded(f"divided difference of order {n} needs C^{n}_+, {f} is C^{f.max_order}_+")
    if n > 3:
        raise ValueError("Fourier quadrature path supports n <= 3")
    spectra = [np.array([v]) for v in nodes]
    value, err = _with_error(f, spectra, quad)
    if err > quad.tol:
        raise QuadratureBudgetExceeded(f"error estimate {err:.3g} exceeds tolerance {quad.tol:.3g}")
    return complex(value.reshape(-1)[0])


def _with_error(f, spectra, quad):
    fine = fourier_divided_difference_tensor(f, spectra, quad)
    if len(spectra) == 1:
        return fine, 0.0
    coarse_quad = QuadratureConfig(
        nodes=max(2, (2 * quad.nodes) // 3),
        max_nodes=max(2, (2 * quad.max_nodes) // 3),
        density_nodes=quad.density_nodes,
        tol=quad.tol,
    )
    coarse = fourier_divided_difference_tensor(f, spectra, coarse_quad)
    return fine, float(np.max(np.abs(fine - coarse)))


def _simplex_volume_by_quadrature(radius: float, n: int, nodes: int) -> float:
    """Iterated Gauss-Legendre value of ``int_0^r ds_1 int_0^{s_1} ds_2 ... 1``."""
    x, w = gauss_legendre(nodes)
    upper = np.array([radius])
    weight = np.array([1.0])
    for _ in range(n):
        weight = np.multiply.outer(weight * upper, w).ravel()
        upper = np.multiply.outer(upper, x).ravel()
    return float(np.sum(weight))


def simplex_measure_mass(f: WienerFunction, n: int, quad: QuadratureConfig | None = None) -> float:
    """Total variation of ``|m_f|(ds_0) ds_1 ... ds_n`` over ``Pi^(n)``, by direct quadrature.

    Each atom ``s_0`` contributes ``|c|`` times the volume of the ordered
    region ``|s_n| <= ... <= |s_1| <= |s_0|`` (same signs), integrated
    numerically.  The constant ``(2 pi)^(-1/2)`` is left out, so the value is
    comparable with ``total_variation(fourier_measure(f, n)) / n!``.
    """
    quad = quad or QuadratureConfig()
    if n > f.max_order:
        raise OrderExceeded(f"order {n} exceeds certified class C^{f.max_order}_+ of {f}")
    locs, masses = fourier_measure(f, 0, density_nodes=quad.density_nodes).atomized()
    nodes = min(quad.nodes, 16) if n == 3 else quad.nodes
    total = 0.0
    for s0, c in zip(locs, masses):
        if c != 0:
            total += abs(c) * _simplex_volume_by_quadrature(abs(s0), n, nodes)
    return total
