"""Finite exterior algebras with scalar or endomorphism-valued coefficients.

An element is stored densely as one coefficient per subset of generators.
Subsets are bitmasks over the canonical generator order
``(dx1, ..., dx2n, dy1, ..., dy2n)``; bit ``i`` is generator ``i``.

Matrix coefficients act on the exterior algebra of a ``2n``-dimensional
space, whose basis is again indexed by bitmasks, so a coefficient matrix
has size ``4**n`` and a natural Z/2 grading (parity of the popcount).
Forms and endomorphisms are combined with the Koszul sign rule::

    (w (x) M) . (v (x) N) = (-1)**(|M| |v|) (w ^ v) (x) (M N)

Every array may carry leading batch axes; all operations broadcast over
them, which is how integrands are evaluated on whole quadrature grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "GeneratorSet",
    "GradedElement",
    "CliffordOperator",
    "wedge",
    "exp_truncated",
    "supertrace",
    "degree_project",
    "clifford",
    "exterior_op",
    "interior_op",
    "parity_signs",
]


def _popcount(x: int) -> int:
    return bin(x).count("1")


@lru_cache(maxsize=None)
def _product_table(m: int):
    """Nonzero products of basis monomials over ``m`` generators.

    Returns index arrays ``(I, J, K, sign, j_odd, starts)`` sorted by ``K``
    so that ``np.add.reduceat`` over ``starts`` sums each output slot.
    """
    rows = []
    for i in range(1 << m):
        for j in range(1 << m):
            if i & j:
                continue
            # inversions: pairs (a in I, b in J) with a > b
            inv = 0
            for b in range(m):
                if j >> b & 1:
                    inv += _popcount(i >> (b + 1))
            rows.append((i | j, i, j, -1.0 if inv & 1 else 1.0, _popcount(j) & 1))
    rows.sort(key=lambda r: (r[0], r[1]))
    k = np.array([r[0] for r in rows])
    starts = np.flatnonzero(np.r_[True, k[1:] != k[:-1]])
    return (
        np.array([r[1] for r in rows]),
        np.array([r[2] for r in rows]),
        k,
        np.array([r[3] for r in rows]),
        np.array([bool(r[4]) for r in rows]),
        starts,
    )


@lru_cache(maxsize=None)
def _degrees(m: int) -> np.ndarray:
    return np.array([_popcount(s) for s in range(1 << m)])


@lru_cache(maxsize=None)
def parity_signs(dim: int) -> np.ndarray:
    """Grading operator diagonal on an exterior-algebra basis of size ``dim``."""
    if dim < 1 or dim & (dim - 1):
        raise ValueError(f"matrix dimension must be a power of two, got {dim}")
    return np.array([-1.0 if _popcount(s) & 1 else 1.0 for s in range(dim)])


@dataclass(frozen=True)
class GeneratorSet:
    """Named anticommuting generators: horizontal legs first, then vertical."""

    horizontal: tuple[str, ...]
    vertical: tuple[str, ...]

    def __post_init__(self):
        names = self.horizontal + self.vertical
        if len(set(names)) != len(names):
            raise ValueError("generator names must be distinct")

    @classmethod
    def standard(cls, n: int) -> "GeneratorSet":
        """``dx1..dx2n`` and ``dy1..dy2n`` for a rank-2n bundle over a 2n-manifold."""
        if n < 1:
            raise ValueError("n must be >= 1")
        return cls(
            tuple(f"dx{i}" for i in range(1, 2 * n + 1)),
            tuple(f"dy{i}" for i in range(1, 2 * n + 1)),
        )

    @property
    def names(self) -> tuple[str, ...]:
        return self.horizontal + self.vertical

    @property
    def cap(self) -> int:
        return len(self.horizontal) + len(self.vertical)

    @property
    def size(self) -> int:
        return 1 << self.cap

    def mask(self, names) -> tuple[int, int]:
        """Bitmask of ``names`` and the sign of sorting them canonically.

        A repeated name gives sign 0.
        """
        order = [self.names.index(nm) for nm in names]
        if len(set(order)) != len(order):
            return 0, 0
        inv = sum(1 for a in range(len(order)) for b in range(a + 1, len(order)) if order[a] > order[b])
        return sum(1 << i for i in order), -1 if inv & 1 else 1


class GradedElement:
    """Element of ``Lambda(generators) (x) End(Lambda(R^2n))`` or of the scalar algebra.

    Parameters
    ----------
    gens : GeneratorSet
    coeffs : ndarray
        Shape ``(*batch, 2**cap)`` for scalar coefficients or
        ``(*batch, 2**cap, d, d)`` for matrix coefficients.
    matrix_dim : int or None
        ``d`` for matrix coefficients, ``None`` for scalars.
    """

    __slots__ = ("gens", "coeffs", "matrix_dim")
    __array_priority__ = 1000

    def __init__(self, gens: GeneratorSet, coeffs, matrix_dim: int | None = None):
        coeffs = np.asarray(coeffs, dtype=float)
        if matrix_dim is None:
            if coeffs.shape[-1:] != (gens.size,):
                raise ValueError(f"scalar coefficients need trailing axis {gens.size}, got {coeffs.shape}")
        else:
            parity_signs(matrix_dim)
            if coeffs.shape[-3:] != (gens.size, matrix_dim, matrix_dim):
                raise ValueError(f"matrix coefficients need trailing shape {(gens.size, matrix_dim, matrix_dim)}")
        self.gens = gens
        self.coeffs = coeffs
        self.matrix_dim = matrix_dim

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, gens, matrix_dim=None, batch=()):
        shape = tuple(batch) + (gens.size,) + ((matrix_dim, matrix_dim) if matrix_dim else ())
        return cls(gens, np.zeros(shape), matrix_dim)

    @classmethod
    def scalar(cls, gens, value=1.0, matrix_dim=None):
        """Degree-0 element ``value`` (times the identity for matrix kind)."""
        value = np.asarray(value, dtype=float)
        out = cls.zero(gens, matrix_dim, value.shape)
        if matrix_dim:
            out.coeffs[..., 0, :, :] = value[..., None, None] * np.eye(matrix_dim)
        else:
            out.coeffs[..., 0] = value
        return out

    @classmethod
    def monomial(cls, gens, names, coeff=1.0, matrix_dim=None):
        """``coeff * g1 ^ g2 ^ ...``.

        For matrix kind ``coeff`` is a plain number (times identity) or an
        array ending in ``(d, d)``; otherwise it is a number or batch array.
        """
        mask, sign = gens.mask(tuple(names))
        coeff = np.asarray(coeff, dtype=float)
        if matrix_dim:
            if coeff.ndim == 0:
                coeff = coeff * np.eye(matrix_dim)
            out = cls.zero(gens, matrix_dim, coeff.shape[:-2])
            out.coeffs[..., mask, :, :] = sign * coeff
        else:
            out = cls.zero(gens, None, coeff.shape)
            out.coeffs[..., mask] = sign * coeff
        return out

    @classmethod
    def generator(cls, gens, name, matrix_dim=None):
        return cls.monomial(gens, (name,), 1.0, matrix_dim)

    # -- structure ----------------------------------------------------------

    @property
    def is_matrix(self) -> bool:
        return self.matrix_dim is not None

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[: -3 if self.is_matrix else -1]

    def coefficient(self, names):
        """Coefficient of the monomial ``names`` (sign-adjusted for order)."""
        mask, sign = self.gens.mask(tuple(names))
        if self.is_matrix:
            return sign * self.coeffs[..., mask, :, :]
        return sign * self.coeffs[..., mask]

    def top(self):
        """Coefficient of the full canonical monomial."""
        return self.coeffs[..., self.gens.size - 1, :, :] if self.is_matrix else self.coeffs[..., -1]

    def as_matrix(self, dim: int) -> "GradedElement":
        if self.is_matrix:
            if self.matrix_dim != dim:
                raise ValueError("coefficient dimensions differ")
            return self
        return GradedElement(self.gens, self.coeffs[..., None, None] * np.eye(dim), dim)

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other):
        if not isinstance(other, GradedElement):
            return None
        if other.gens != self.gens:
            raise ValueError("mismatched generator sets")
        return other

    def __add__(self, other):
        if isinstance(other, GradedElement):
            self._coerce(other)
            a, b = self, other
            if a.is_matrix or b.is_matrix:
                dim = a.matrix_dim or b.matrix_dim
                a, b = a.as_matrix(dim), b.as_matrix(dim)
            return GradedElement(self.gens, a.coeffs + b.coeffs, a.matrix_dim)
        return self + GradedElement.scalar(self.gens, other, self.matrix_dim)

    __radd__ = __add__

    def __neg__(self):
        return GradedElement(self.gens, -self.coeffs, self.matrix_dim)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, GradedElement):
            return wedge(self, other)
        other = np.asarray(other, dtype=float)
        if self.is_matrix:
            other = other[..., None, None, None]
        else:
            other = other[..., None]
        return GradedElement(self.gens, self.coeffs * other, self.matrix_dim)

    def __rmul__(self, other):
        return self * other

    def __truediv__(self, other):
        return self * (1.0 / np.asarray(other, dtype=float))

    def __repr__(self):
        kind = f"End({self.matrix_dim})" if self.is_matrix else "scalar"
        return f"GradedElement({kind}, gens={self.gens.names}, batch={self.batch_shape})"

    def terms(self, tol=0.0) -> dict[tuple[str, ...], object]:
        """Nonzero coefficients keyed by canonically ordered generator names."""
        if self.batch_shape:
            raise ValueError("terms() needs an unbatched element")
        out = {}
        for mask in range(self.gens.size):
            c = self.coeffs[mask]
            if np.max(np.abs(c)) > tol:
                out[tuple(nm for i, nm in enumerate(self.gens.names) if mask >> i & 1)] = c
        return out


def wedge(a: GradedElement, b: GradedElement) -> GradedElement:
    """Graded product; degrees beyond the cap vanish automatically."""
    if a.gens != b.gens:
        raise ValueError("mismatched generator sets")
    m = a.gens.cap
    I, J, K, sign, j_odd, starts = _product_table(m)
    if not (a.is_matrix or b.is_matrix):
        prod = a.coeffs[..., I] * b.coeffs[..., J] * sign
        return GradedElement(a.gens, np.add.reduceat(prod, starts, axis=-1), None)
    dim = a.matrix_dim or b.matrix_dim
    a, b = a.as_matrix(dim), b.as_matrix(dim)
    p = parity_signs(dim)
    A = a.coeffs[..., I, :, :]
    # odd-degree right factor: conjugate the left coefficient by the grading
    A = np.where(j_odd[:, None, None], A * np.outer(p, p), A)
    prod = np.matmul(A, b.coeffs[..., J, :, :]) * sign[:, None, None]
    return GradedElement(a.gens, np.add.reduceat(prod, starts, axis=-3), dim)


def degree_project(a: GradedElement, k: int) -> GradedElement:
    """Homogeneous form-degree ``k`` part."""
    if not 0 <= k <= a.gens.cap:
        raise ValueError(f"degree {k} outside [0, {a.gens.cap}]")
    keep = (_degrees(a.gens.cap) == k).astype(float)
    keep = keep[:, None, None] if a.is_matrix else keep
    return GradedElement(a.gens, a.coeffs * keep, a.matrix_dim)


def _check_even(a: GradedElement, tol=1e-12):
    odd_form = (_degrees(a.gens.cap) & 1).astype(bool)
    if not a.is_matrix:
        bad = np.abs(a.coeffs[..., odd_form])
    else:
        p = parity_signs(a.matrix_dim)
        odd_mat = np.outer(p, p) < 0
        c = a.coeffs
        # even total parity: even forms with even matrices, odd forms with odd matrices
        bad = np.concatenate([
            np.abs(c[..., ~odd_form, :, :][..., odd_mat]).ravel(),
            np.abs(c[..., odd_form, :, :][..., ~odd_mat]).ravel(),
        ])
    scale = max(1.0, float(np.max(np.abs(a.coeffs), initial=0.0)))
    if bad.size and np.max(bad) > tol * scale:
        raise ValueError("exp_truncated needs an element of even total parity")


def exp_truncated(a: GradedElement) -> GradedElement:
    """Exponential of an even element, exact up to floating point.

    The positive-degree part is nilpotent, so its series stops at the
    degree cap. A degree-0 block that is a multiple of the identity is
    factored out as a scalar exponential; a general degree-0 block goes
    through scaling and squaring of the full series.
    """
    _check_even(a)
    gens, dim = a.gens, a.matrix_dim
    if dim is None:
        a0 = a.coeffs[..., 0]
        nil = GradedElement(gens, a.coeffs.copy(), None)
        nil.coeffs[..., 0] = 0.0
        return _nilpotent_exp(nil) * np.exp(a0)
    a0 = a.coeffs[..., 0, :, :]
    diag = np.einsum("...ii->...i", a0)
    lam = diag.mean(axis=-1)
    if np.allclose(a0, lam[..., None, None] * np.eye(dim), rtol=0.0, atol=1e-14 * max(1.0, np.max(np.abs(a0)))):
        nil = GradedElement(gens, a.coeffs.copy(), dim)
        nil.coeffs[..., 0, :, :] = 0.0
        return _nilpotent_exp(nil) * np.exp(lam)
    return _scaled_exp(a)


def _nilpotent_exp(nil: GradedElement) -> GradedElement:
    one = GradedElement.scalar(nil.gens, np.ones(nil.batch_shape), nil.matrix_dim)
    result, term = one, one
    for k in range(1, nil.gens.cap + 1):
        term = wedge(term, nil) / k
        result = result + term
    return result


def _scaled_exp(a: GradedElement) -> GradedElement:
    norm = float(np.max(np.abs(a.coeffs), initial=0.0)) * a.matrix_dim
    s = max(0, int(np.ceil(np.log2(max(norm, 1e-300) / 0.25)))) if norm > 0.25 else 0
    x = a / (2.0**s)
    one = GradedElement.scalar(a.gens, np.ones(a.batch_shape), a.matrix_dim)
    result, term = one, one
    for k in range(1, a.gens.cap + 18):
        term = wedge(term, x) / k
        result = result + term
    for _ in range(s):
        result = wedge(result, result)
    return result


def supertrace(a: GradedElement) -> GradedElement:
    """Coefficient-wise supertrace, returning a scalar-coefficient element."""
    if not a.is_matrix:
        raise TypeError("supertrace needs matrix coefficients")
    p = parity_signs(a.matrix_dim)
    return GradedElement(a.gens, np.einsum("...kii,i->...k", a.coeffs, p), None)


# -- operators on Lambda(R^m) ------------------------------------------------


@lru_cache(maxsize=None)
def _ext_int(m: int):
    dim = 1 << m
    ext = np.zeros((m, dim, dim))
    intr = np.zeros((m, dim, dim))
    for k in range(m):
        for s in range(dim):
            sign = -1.0 if _popcount(s & ((1 << k) - 1)) & 1 else 1.0
            if s >> k & 1:
                intr[k, s ^ (1 << k), s] = sign
            else:
                ext[k, s | (1 << k), s] = sign
    ext.setflags(write=False)
    intr.setflags(write=False)
    return ext, intr


def exterior_op(k: int, m: int) -> np.ndarray:
    """Matrix of ``e^k ^ .`` on ``Lambda(R^m)`` (0-based ``k``)."""
    return _ext_int(m)[0][k]


def interior_op(k: int, m: int) -> np.ndarray:
    """Matrix of the contraction ``i_{e_k}`` on ``Lambda(R^m)``."""
    return _ext_int(m)[1][k]


@dataclass(frozen=True)
class CliffordOperator:
    """``c(Z) = Z* ^ . - i_Z`` realized on the exterior basis of ``R^m``."""

    vector: np.ndarray
    dual: np.ndarray
    matrix: np.ndarray = field(repr=False)


def clifford(Z, Zdual=None) -> CliffordOperator:
    """Clifford action of ``Z`` given its metric dual (Euclidean if omitted)."""
    Z = np.asarray(Z, dtype=float)
    Zdual = Z if Zdual is None else np.asarray(Zdual, dtype=float)
    if Z.shape != Zdual.shape or Z.ndim != 1:
        raise ValueError("Z and its dual must be vectors of equal length")
    m = Z.shape[0]
    if m < 2 or m % 2:
        raise ValueError("fiber dimension must be even and positive")
    ext, intr = _ext_int(m)
    mat = np.einsum("k,kij->ij", Zdual, ext) - np.einsum("k,kij->ij", Z, intr)
    return CliffordOperator(Z.copy(), Zdual.copy(), mat)
