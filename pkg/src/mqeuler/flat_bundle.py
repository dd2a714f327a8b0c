"""Oriented rank-2 bundles over the flat torus atlas.

Flat bundles come from a pair of commuting holonomies ``(A, B)`` attached
to the two lattice generators: over the universal cover the bundle is
trivial and ``(x + L, v) ~ (x, rho(L) v)`` with ``rho(m, k) = A^m B^k``.
Chart ``a`` trivializes over its canonical lift, so fiber coordinates in
two charts differ by ``rho`` of the lift translation.

The non-flat path is a complex line bundle of degree ``k`` viewed as a
real oriented plane bundle, with a unitary connection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .atlas import Atlas, chart_overlap_frame, overlap_components

__all__ = [
    "FlatBundle",
    "GeneralBundle",
    "from_holonomy",
    "frame_matrix",
    "line_bundle",
    "curvature_integral",
    "J",
]

J = np.array([[0.0, -1.0], [1.0, 0.0]])


def _power(M: np.ndarray, k: int) -> np.ndarray:
    return np.linalg.matrix_power(M if k >= 0 else np.linalg.inv(M), abs(k))


@dataclass(frozen=True)
class FlatBundle:
    """Flat bundle with constant transitions on each overlap component."""

    A: np.ndarray
    B: np.ndarray
    atlas: Atlas
    rank: int = 2
    _transitions: dict = field(default_factory=dict, repr=False, compare=False)

    def holonomy(self, lam) -> np.ndarray:
        m, k = (int(v) for v in lam)
        return _power(self.A, m) @ _power(self.B, k)

    def transition(self, a: int, b: int, p=None) -> np.ndarray:
        """``g_ab`` with ``y_a = g_ab y_b`` on the overlap component at ``p``."""
        lam = chart_overlap_frame(self.atlas[a], self.atlas[b], p)
        return self.holonomy(lam)

    @property
    def transitions(self) -> dict[tuple[int, int, tuple[int, int]], np.ndarray]:
        """All ``g_ab`` keyed by ``(a, b, component label)``."""
        if not self._transitions:
            for ca in self.atlas:
                for cb in self.atlas:
                    if ca.index == cb.index:
                        continue
                    for lam in overlap_components(ca, cb):
                        self._transitions[(ca.index, cb.index, lam)] = self.holonomy(lam)
        return self._transitions

    def is_trivial(self, tol=0.0) -> bool:
        return bool(np.allclose(self.A, np.eye(2), atol=tol) and np.allclose(self.B, np.eye(2), atol=tol))


def from_holonomy(A, B, atlas: Atlas) -> FlatBundle:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != (2, 2) or B.shape != (2, 2):
        raise ValueError("holonomies must be 2x2")
    if np.linalg.det(A) <= 0 or np.linalg.det(B) <= 0:
        raise ValueError("holonomies must preserve orientation")
    scale = max(1.0, np.abs(A).max() * np.abs(B).max())
    if not np.allclose(A @ B, B @ A, atol=1e-12 * scale):
        raise ValueError("torus holonomies must commute")
    return FlatBundle(A, B, atlas)


def frame_matrix(vertex_chart: int, reference_chart: int, bundle: FlatBundle, p=None) -> np.ndarray:
    """Constant ``B`` with ``y_vertex = B y_reference`` near ``p``."""
    if vertex_chart == reference_chart:
        return np.eye(bundle.rank)
    return bundle.transition(vertex_chart, reference_chart, p)


@dataclass(frozen=True)
class GeneralBundle:
    """Degree-``k`` line bundle on the torus with a unitary connection.

    Sections satisfy ``s(x + e2) = exp(-2 pi i k x1) s(x)`` and
    ``s(x + e1) = s(x)``; the connection is ``d + i a`` with
    ``a = 2 pi k x2 dx1 + eps (sin(2 pi x2) dx1 + sin(2 pi x1) dx2)``.
    The real picture uses the frame ``(1, i)`` so ``i`` acts by ``J``.
    """

    k: int
    eps: float = 0.0
    atlas: Atlas | None = None
    rank: int = 2

    def connection(self, x) -> np.ndarray:
        """``omega_mu(x)``, shape ``(..., 2, 2, 2)`` indexed ``[mu, i, j]``."""
        x = np.asarray(x, dtype=float)
        a1 = 2 * np.pi * self.k * x[..., 1] + self.eps * np.sin(2 * np.pi * x[..., 1])
        a2 = self.eps * np.sin(2 * np.pi * x[..., 0])
        return np.stack([a1, a2], axis=-1)[..., None, None] * J

    def connection_derivative(self, x) -> np.ndarray:
        """``d_nu omega_mu``, shape ``(..., 2, 2, 2, 2)`` indexed ``[nu, mu, i, j]``."""
        x = np.asarray(x, dtype=float)
        d = np.zeros(x.shape[:-1] + (2, 2))
        d[..., 1, 0] = 2 * np.pi * self.k + 2 * np.pi * self.eps * np.cos(2 * np.pi * x[..., 1])
        d[..., 0, 1] = 2 * np.pi * self.eps * np.cos(2 * np.pi * x[..., 0])
        return d[..., None, None] * J

    def curvature(self, x) -> np.ndarray:
        """``dx1 ^ dx2`` component of ``d omega + omega ^ omega``."""
        w = self.connection(x)
        dw = self.connection_derivative(x)
        return dw[..., 0, 1, :, :] - dw[..., 1, 0, :, :] + w[..., 0, :, :] @ w[..., 1, :, :] - w[..., 1, :, :] @ w[..., 0, :, :]

    def euler_density(self, x) -> np.ndarray:
        """Pfaffian of ``curvature / 2 pi``: the Chern-Weil Euler density."""
        return self.curvature(x)[..., 0, 1] / (2 * np.pi)

    def transition(self, lam, x) -> np.ndarray:
        """Gauge matrix ``g`` with ``s(x + lam) = g(x) s(x)``."""
        x = np.asarray(x, dtype=float)
        theta = -2 * np.pi * self.k * int(lam[1]) * x[..., 0]
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)

    def compatibility_defect(self, lam, x) -> float:
        """Max deviation from ``omega(x + lam) = g omega g^-1 - dg g^-1``."""
        x = np.asarray(x, dtype=float)
        dtheta = np.zeros(x.shape[:-1] + (2,))
        dtheta[..., 0] = -2 * np.pi * self.k * int(lam[1])
        # abelian gauge group: conjugation is trivial
        expected = self.connection(x) - dtheta[..., None, None] * J
        return float(np.max(np.abs(self.connection(x + np.asarray(lam, dtype=float)) - expected)))

    def chart_connection(self, index: int, p) -> np.ndarray:
        """Connection in chart ``index``'s trivialization over its canonical lift."""
        if self.atlas is None:
            raise ValueError("bundle has no atlas")
        return self.connection(self.atlas[index].lift(p))


def line_bundle(k: int, atlas: Atlas | None = None, eps: float | None = None) -> GeneralBundle:
    """Degree-``k`` test bundle; ``eps`` defaults to 0.3, or 0 when ``k == 0``."""
    if eps is None:
        eps = 0.0 if k == 0 else 0.3
    return GeneralBundle(int(k), float(eps), atlas)


def curvature_integral(bundle: GeneralBundle, order: int = 64) -> float:
    """``(1/2pi) int_T2 Pf(curvature)`` by tensor Gauss-Legendre quadrature."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    X = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1)
    return float(np.einsum("i,j,ij->", w, w, bundle.euler_density(X)))
