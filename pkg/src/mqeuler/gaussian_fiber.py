"""Closed-form Gaussian fiber integrals of polynomial top vertical forms.

Everything here reduces to moments

    int_{R^m} y^a exp(-y^T Q y) dy = pi^(m/2) det(Q)^(-1/2) E[y^a],

with ``y ~ N(0, Q^-1 / 2)`` and ``E[y^a]`` a sum over perfect pairings
(Isserlis). Q may carry leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np

__all__ = [
    "QuadraticWeight",
    "PolyVerticalForm",
    "gaussian_moment",
    "fiber_integrate",
    "wedge_quadratic",
    "check_spd",
]


def check_spd(Q) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    if Q.shape[-1] != Q.shape[-2]:
        raise ValueError("Q must be square")
    scale = max(1.0, float(np.max(np.abs(Q), initial=0.0)))
    if not np.allclose(Q, np.swapaxes(Q, -1, -2), atol=1e-12 * scale):
        raise ValueError("Q must be symmetric")
    if np.any(np.linalg.eigvalsh(Q)[..., 0] <= 0):
        raise ValueError("Q must be positive definite")
    return Q


@dataclass(frozen=True)
class QuadraticWeight:
    """``Q = sum_i w_i B_i^T B_i + w0 Id``."""

    Q: np.ndarray

    def __post_init__(self):
        check_spd(self.Q)

    @classmethod
    def from_frames(cls, frames, weights, w0=0.0) -> "QuadraticWeight":
        frames = [np.asarray(B, dtype=float) for B in frames]
        if any(w < 0 for w in weights) or w0 < 0:
            raise ValueError("weights must be nonnegative")
        m = frames[0].shape[0] if frames else 0
        Q = w0 * np.eye(m) + sum(w * B.T @ B for w, B in zip(weights, frames))
        return cls(np.asarray(Q))


@lru_cache(maxsize=None)
def _pairings(items: tuple[int, ...]) -> tuple[tuple[tuple[int, int], ...], ...]:
    if not items:
        return ((),)
    first, rest = items[0], items[1:]
    out = []
    for j in range(len(rest)):
        for sub in _pairings(rest[:j] + rest[j + 1 :]):
            out.append(((first, rest[j]),) + sub)
    return tuple(out)


def _normal_moment(cov: np.ndarray, multi_index) -> np.ndarray:
    items = tuple(i for i, e in enumerate(multi_index) for _ in range(int(e)))
    if len(items) % 2:
        return np.zeros(cov.shape[:-2])
    total = np.zeros(cov.shape[:-2])
    for pairing in _pairings(items):
        term = np.ones(cov.shape[:-2])
        for a, b in pairing:
            term = term * cov[..., a, b]
        total = total + term
    return total


def gaussian_moment(Q, multi_index) -> np.ndarray:
    """``int y^multi_index exp(-y^T Q y) dy`` over ``R^m``."""
    Q = check_spd(Q)
    m = Q.shape[-1]
    if len(multi_index) != m:
        raise ValueError(f"multi-index has length {len(multi_index)}, expected {m}")
    if sum(multi_index) % 2:
        return np.zeros(Q.shape[:-2])
    cov = 0.5 * np.linalg.inv(Q)
    return np.pi ** (m / 2) / np.sqrt(np.linalg.det(Q)) * _normal_moment(cov, multi_index)


@dataclass(frozen=True)
class PolyVerticalForm:
    """``c(y) dy1 ^ ... ^ dym`` with ``c`` stored as ``{exponents: coefficient}``."""

    dim: int
    coeffs: dict

    def __post_init__(self):
        for a in self.coeffs:
            if len(a) != self.dim:
                raise ValueError("exponent tuple length must equal the fiber dimension")

    @property
    def degree(self) -> int:
        return max((sum(a) for a, c in self.coeffs.items() if c != 0), default=0)

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1])
        for a, c in self.coeffs.items():
            out = out + c * np.prod(y ** np.array(a), axis=-1)
        return out

    def __neg__(self):
        return PolyVerticalForm(self.dim, {a: -c for a, c in self.coeffs.items()})

    def is_zero(self, tol=1e-13) -> bool:
        return all(abs(c) <= tol for c in self.coeffs.values())


def fiber_integrate(form: PolyVerticalForm, Q) -> np.ndarray:
    """Integral of ``form * exp(-y^T Q y)`` with the fiber oriented by ``dy1 ^ ... ^ dym``."""
    Q = check_spd(Q)
    if Q.shape[-1] != form.dim:
        raise ValueError("dimension mismatch between form and Q")
    cov = 0.5 * np.linalg.inv(Q)
    norm = np.pi ** (form.dim / 2) / np.sqrt(np.linalg.det(Q))
    total = np.zeros(Q.shape[:-2])
    for a, c in form.coeffs.items():
        if c != 0 and sum(a) % 2 == 0:
            total = total + c * _normal_moment(cov, a)
    return norm * total


def _poly_mul(p: dict, q: dict) -> dict:
    out: dict = {}
    for a, ca in p.items():
        for b, cb in q.items():
            k = tuple(x + y for x, y in zip(a, b))
            out[k] = out.get(k, 0.0) + ca * cb
    return out


def _perm_sign(perm) -> int:
    s, seen = 1, set()
    for i in range(len(perm)):
        if i in seen:
            continue
        j, length = i, 0
        while j not in seen:
            seen.add(j)
            j = perm[j]
            length += 1
        s *= -1 if length % 2 == 0 else 1
    return s


def wedge_quadratic(frames) -> PolyVerticalForm:
    """Expand ``prod_i d h_i`` with ``h_i = |B_i y|^2`` into ``c(y) dy1 ^ ... ^ dym``.

    ``d h_i = 2 (B_i y) . (B_i dy) = sum_l (2 S_i y)_l dy^l`` with
    ``S_i = B_i^T B_i``; the wedge of the ``m`` one-forms is the
    determinant of their coefficient matrix, expanded as a polynomial.
    """
    frames = [np.asarray(B, dtype=float) for B in frames]
    m = frames[0].shape[0]
    if len(frames) != m or any(B.shape != (m, m) for B in frames):
        raise ValueError(f"need {m} square frames of size {m}")
    unit = [tuple(1 if k == j else 0 for k in range(m)) for j in range(m)]
    # entry (i, l): linear polynomial 2 (S_i y)_l
    entries = [[{unit[j]: 2.0 * S[l, j] for j in range(m)} for l in range(m)] for S in (B.T @ B for B in frames)]
    total: dict = {}
    for perm in permutations(range(m)):
        term = {tuple([0] * m): float(_perm_sign(perm))}
        for i, l in enumerate(perm):
            term = _poly_mul(term, entries[i][l])
        for a, c in term.items():
            total[a] = total.get(a, 0.0) + c
    return PolyVerticalForm(m, {a: c for a, c in total.items() if c != 0.0})
