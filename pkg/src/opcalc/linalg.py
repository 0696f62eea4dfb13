"""Block-diagonal operators with a weighted trace.

A finite von Neumann algebra is modelled as a direct sum of full matrix
blocks ``M_{d_1} + ... + M_{d_k}``; the trace is ``tau(X) = sum_b w_b Tr(X_b)``
with positive block weights ``w_b``.  Non-integer weights give the
non-integer dimensions characteristic of type II algebras.
"""

from __future__ import annotations

from dataclasses import dataclass
from numbers import Number
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, FunctionDomain, NotHermitian

HERMITIAN_RTOL = 1e-12


def _as_block(matrix) -> np.ndarray:
    arr = np.array(matrix, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"block must be a square matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _hermitian_defect(block: np.ndarray) -> float:
    scale = float(np.max(np.abs(block))) if block.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(block - block.conj().T))) / scale


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """Direct sum of square complex blocks, each with a positive trace weight."""

    blocks: tuple
    weights: tuple
    hermitian_flag: bool = False

    def __post_init__(self):
        blocks = tuple(_as_block(b) for b in self.blocks)
        weights = tuple(float(w) for w in self.weights)
        if len(blocks) == 0:
            raise DimensionMismatch("operator needs at least one block")
        if len(blocks) != len(weights):
            raise DimensionMismatch(
                f"{len(blocks)} blocks but {len(weights)} weights"
            )
        if any(not (w > 0 and np.isfinite(w)) for w in weights):
            raise DimensionMismatch(f"block weights must be positive, got {weights}")
        if self.hermitian_flag:
            for k, b in enumerate(blocks):
                defect = _hermitian_defect(b)
                if defect > HERMITIAN_RTOL:
                    raise NotHermitian(f"block {k} fails Hermiticity (relative defect {defect:.3g})")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "weights", weights)

    # -- construction -----------------------------------------------------

    @classmethod
    def hermitian(cls, blocks, weights=None) -> "BlockOperator":
        blocks = list(blocks)
        if weights is None:
            weights = [1.0] * len(blocks)
        return cls(tuple(blocks), tuple(weights), hermitian_flag=True)

    @classmethod
    def diag(cls, values, weight: float = 1.0) -> "BlockOperator":
        """Single-block real diagonal operator."""
        return cls.hermitian([np.diag(np.asarray(values, dtype=float))], [weight])

    @classmethod
    def identity(cls, dims: Sequence[int], weights: Sequence[float]) -> "BlockOperator":
        return cls.hermitian([np.eye(d) for d in dims], weights)

    # -- structure --------------------------------------------------------

    @property
    def dims(self) -> tuple:
        return tuple(b.shape[0] for b in self.blocks)

    @property
    def dim(self) -> int:
        return sum(self.dims)

    def same_shape(self, other: "BlockOperator") -> bool:
        return self.dims == other.dims and self.weights == other.weights

    def check_shape(self, other: "BlockOperator") -> None:
        if self.dims != other.dims:
            raise DimensionMismatch(f"block dims differ: {self.dims} vs {other.dims}")
        if self.weights != other.weights:
            raise DimensionMismatch(f"block weights differ: {self.weights} vs {other.weights}")

    def with_blocks(self, blocks, hermitian_flag: bool = False) -> "BlockOperator":
        return BlockOperator(tuple(blocks), self.weights, hermitian_flag=hermitian_flag)

    def to_dense(self) -> np.ndarray:
        """Dense direct-sum matrix (weights are not encoded)."""
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        i = 0
        for b in self.blocks:
            d = b.shape[0]
            out[i:i + d, i:i + d] = b
            i += d
        return out

    # -- algebra ----------------------------------------------------------

    def _binary(self, other, op, keep_hermitian: bool) -> "BlockOperator":
        self.check_shape(other)
        blocks = [op(a, b) for a, b in zip(self.blocks, other.blocks)]
        flag = keep_hermitian and self.hermitian_flag and other.hermitian_flag
        return self.with_blocks(blocks, hermitian_flag=flag)

    def __add__(self, other: "BlockOperator") -> "BlockOperator":
        return self._binary(other, np.add, True)

    def __sub__(self, other: "BlockOperator") -> "BlockOperator":
        return self._binary(other, np.subtract, True)

    def __matmul__(self, other: "BlockOperator") -> "BlockOperator":
        return self._binary(other, np.matmul, False)

    def __mul__(self, scalar) -> "BlockOperator":
        if not isinstance(scalar, Number):
            return NotImplemented
        real = complex(scalar).imag == 0
        blocks = [b * scalar for b in self.blocks]
        return self.with_blocks(blocks, hermitian_flag=self.hermitian_flag and real)

    __rmul__ = __mul__

    def __neg__(self) -> "BlockOperator":
        return self * -1.0

    def shift(self, c: float) -> "BlockOperator":
        """Return ``self - c * 1``."""
        blocks = [b - c * np.eye(b.shape[0]) for b in self.blocks]
        return self.with_blocks(blocks, hermitian_flag=self.hermitian_flag and complex(c).imag == 0)

    def adjoint(self) -> "BlockOperator":
        return self.with_blocks([b.conj().T for b in self.blocks], hermitian_flag=self.hermitian_flag)

    def __repr__(self) -> str:
        return f"BlockOperator(dims={self.dims}, weights={self.weights}, hermitian={self.hermitian_flag})"


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: tuple
    eigenvectors: tuple
    source: BlockOperator

    @property
    def weights(self) -> tuple:
        return self.source.weights

    @property
    def spectral_radius(self) -> float:
        return max(float(np.max(np.abs(lam))) for lam in self.eigenvalues)

    def spectrum(self) -> np.ndarray:
        """All eigenvalues, concatenated over blocks (unweighted)."""
        return np.concatenate(self.eigenvalues)


@dataclass(frozen=True, eq=False)
class WeightedProjection:
    projection: BlockOperator
    weighted_rank: float


def eigh(A: BlockOperator) -> SpectralDecomposition:
    """Blockwise Hermitian eigendecomposition; eigenvalues ascending per block."""
    if not A.hermitian_flag:
        raise NotHermitian("eigh requires an operator flagged Hermitian")
    vals, vecs = [], []
    for b in A.blocks:
        if _hermitian_defect(b) > HERMITIAN_RTOL:
            raise NotHermitian("block fails Hermiticity check")
        lam, u = np.linalg.eigh(b)
        lam.setflags(write=False)
        u.setflags(write=False)
        vals.append(lam)
        vecs.append(u)
    return SpectralDecomposition(tuple(vals), tuple(vecs), A)


def weighted_trace(X: BlockOperator) -> complex:
    return complex(sum(w * np.trace(b) for w, b in zip(X.weights, X.blocks)))


def trace_norm(X: BlockOperator) -> float:
    return float(sum(w * np.sum(np.linalg.svd(b, compute_uv=False)) for w, b in zip(X.weights, X.blocks)))


def uniform_norm(X: BlockOperator) -> float:
    """Operator norm of the direct sum (weights do not enter)."""
    return float(max(np.linalg.norm(b, 2) if b.size else 0.0 for b in X.blocks))


def ideal_norm(X: BlockOperator, kind: str = "uniform") -> float:
    """Norm of one of the two shipped operator ideals.

    ``"trace"`` is ``max(||X||_1, ||X||)`` so that the ideal norm dominates the
    uniform norm even when block weights are below one.
    """
    if kind == "uniform":
        return uniform_norm(X)
    if kind == "trace":
        return max(trace_norm(X), uniform_norm(X))
    raise ValueError(f"unknown norm kind {kind!r}")


def apply_function(f: Callable, D: SpectralDecomposition) -> BlockOperator:
    """Functional calculus ``U f(Lambda) U*`` block by block.

    ``f`` is called on a 1-d array of eigenvalues.  If every value is real the
    result is symmetrised and flagged Hermitian.
    """
    values = []
    for lam in D.eigenvalues:
        with np.errstate(all="ignore"):
            fl = np.asarray(f(lam), dtype=np.complex128)
        if fl.shape != lam.shape:
            fl = np.broadcast_to(fl, lam.shape)
        if not np.all(np.isfinite(fl)):
            bad = lam[~np.isfinite(fl)]
            raise FunctionDomain(f"function undefined at eigenvalue(s) {bad}")
        values.append(fl)
    real = all(np.all(v.imag == 0) for v in values)
    blocks = []
    for u, fl in zip(D.eigenvectors, values):
        b = (u * fl) @ u.conj().T
        if real:
            b = 0.5 * (b + b.conj().T)
        blocks.append(b)
    return D.source.with_blocks(blocks, hermitian_flag=real)


def _projection_from_mask(D: SpectralDecomposition, masks) -> WeightedProjection:
    blocks = []
    rank = 0.0
    for u, m, w in zip(D.eigenvectors, masks, D.weights):
        v = u[:, m]
        p = v @ v.conj().T
        blocks.append(0.5 * (p + p.conj().T))
        rank += w * int(np.count_nonzero(m))
    return WeightedProjection(D.source.with_blocks(blocks, hermitian_flag=True), rank)


def spectral_projection(
    D: SpectralDecomposition,
    a: float,
    b: float,
    left_closed: bool = False,
    right_closed: bool = True,
) -> WeightedProjection:
    """Projection onto eigenvectors with eigenvalue in the interval from a to b.

    Defaults give ``(a, b]``; infinite endpoints are allowed.
    """
    if a > b:
        raise ValueError(f"interval endpoints out of order: {a} > {b}")
    masks = []
    for lam in D.eigenvalues:
        lo = lam >= a if left_closed else lam > a
        hi = lam <= b if right_closed else lam < b
        masks.append(lo & hi)
    return _projection_from_mask(D, masks)


def default_kernel_tol(D: SpectralDecomposition) -> float:
    return 1e-9 * (1.0 + D.spectral_radius)


def kernel_projection(D: SpectralDecomposition, mu: float, tol: float | None = None) -> WeightedProjection:
    """Projection onto eigenvectors with ``|lambda - mu| <= tol``."""
    if tol is None:
        tol = default_kernel_tol(D)
    if not tol > 0:
        raise ValueError("kernel tolerance must be positive")
    return _projection_from_mask(D, [np.abs(lam - mu) <= tol for lam in D.eigenvalues])


def counting_function(D: SpectralDecomposition, lam: float, strict: bool = False) -> tuple:
    """Per-block eigenvalue counts below ``lam`` (``<=`` unless ``strict``)."""
    side = "left" if strict else "right"
    return tuple(int(np.searchsorted(ev, lam, side=side)) for ev in D.eigenvalues)


def weighted_count(counts: Sequence[int], weights: Sequence[float]) -> float:
    """``sum_b w_b * n_b`` with a fixed summation order."""
    total = 0.0
    for n, w in zip(counts, weights):
        total += w * n
    return total
