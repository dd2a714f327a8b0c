"""Transversal disk coverings of the torus, bump profiles and vertices.

The bump profile of a chart is ``h(2 r / w)`` on the outer half of a
collar of width ``w`` (``h(t) = exp(-1/t^2)``), bridged smoothly to 1 on
``[w/2, w]``; ``r`` is the inward normal coordinate. All of ``d rho`` is
therefore confined to the collar ``0 < r < w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import combinations, product

import numpy as np

from .atlas import (
    Atlas,
    Chart,
    normal_coordinate,
    normal_gradient,
    normalize,
    wrapped_delta,
    wrapped_distance,
)
from .flat_bundle import FlatBundle, frame_matrix

__all__ = [
    "BumpProfile",
    "TransversalCovering",
    "VertexRecord",
    "CoveringError",
    "h",
    "vertices",
    "permute_ordering",
    "collar_point",
    "collar_lens_width",
]


class CoveringError(ValueError):
    """Raised when a covering is not transversal, not covering, or too coarse."""


def h(t):
    """``exp(-1/t^2)`` for ``t > 0``, zero otherwise."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0) ** 2), 0.0)


def _dh(t):
    t = np.asarray(t, dtype=float)
    ts = np.where(t > 0, t, 1.0)
    return np.where(t > 0, 2.0 / ts**3 * np.exp(-1.0 / ts**2), 0.0)


def _psi(t):
    t = np.asarray(t, dtype=float)
    ts = np.where(t > 0, t, 1.0)
    return np.where(t > 0, np.exp(-1.0 / ts), 0.0)


def _dpsi(t):
    t = np.asarray(t, dtype=float)
    ts = np.where(t > 0, t, 1.0)
    return np.where(t > 0, np.exp(-1.0 / ts) / ts**2, 0.0)


@dataclass(frozen=True)
class BumpProfile:
    """Radial cutoff of collar width ``w``; see the module docstring."""

    w: float

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError("collar width must be positive")

    def _step(self, r):
        t = np.clip((np.asarray(r, dtype=float) - 0.5 * self.w) / (0.5 * self.w), 0.0, 1.0)
        a, b = _psi(t), _psi(1.0 - t)
        chi = a / (a + b)
        dchi = (_dpsi(t) * b + a * _dpsi(1.0 - t)) / (a + b) ** 2 * (2.0 / self.w)
        inside = (np.asarray(r) > 0.5 * self.w) & (np.asarray(r) < self.w)
        return chi, np.where(inside, dchi, 0.0)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        chi, _ = self._step(r)
        hv = h(2.0 * r / self.w)
        # h + chi (1 - h) keeps tiny germ values exact
        val = hv + chi * (1.0 - hv)
        return np.where(r <= 0, 0.0, np.where(r >= self.w, 1.0, val))

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        chi, dchi = self._step(r)
        hv = h(2.0 * r / self.w)
        d = _dh(2.0 * r / self.w) * (2.0 / self.w) * (1.0 - chi) + (1.0 - hv) * dchi
        return np.where((r <= 0) | (r >= self.w), 0.0, d)

    def inverse(self, u):
        """``r`` with ``rho(r) = u`` for ``u`` in ``[0, 1]``."""
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            r = np.where(u > 0, 0.5 * self.w / np.sqrt(-np.log(np.clip(u, 1e-300, np.exp(-1.0)))), 0.0)
        bridge = u > np.exp(-1.0)
        if np.any(bridge):
            lo = np.full(np.count_nonzero(bridge), 0.5 * self.w)
            hi = np.full_like(lo, self.w)
            target = u[bridge]
            for _ in range(64):
                mid = 0.5 * (lo + hi)
                below = self(mid) < target
                lo = np.where(below, mid, lo)
                hi = np.where(below, hi, mid)
            r = np.array(r, copy=True)
            r[bridge] = 0.5 * (lo + hi)
        return r

    def log_value(self, r):
        """``log rho(r)`` without underflow on the ``h`` germ."""
        r = np.asarray(r, dtype=float)
        germ = r <= 0.5 * self.w
        with np.errstate(divide="ignore"):
            safe = np.where(germ & (r > 0), r, 0.5 * self.w)
            out = np.where(germ, -((0.5 * self.w / safe) ** 2), np.log(self(np.where(germ, self.w, r))))
        return np.where(r <= 0, -np.inf, out)

    def log_inverse(self, sigma):
        """``r`` with ``log rho(r) = sigma``; closed form on the ``h`` germ."""
        sigma = np.asarray(sigma, dtype=float)
        germ = sigma <= -1.0
        out = np.empty_like(sigma)
        out[germ] = 0.5 * self.w / np.sqrt(-sigma[germ])
        if np.any(~germ):
            out[~germ] = self.inverse(np.exp(sigma[~germ]))
        return out


@dataclass(frozen=True)
class VertexRecord:
    """A point lying on two chart boundaries (``n = 1``)."""

    p: np.ndarray
    beta: tuple[int, ...]
    alpha: tuple[int, ...]
    frames: tuple[np.ndarray, ...]
    in_B_plus: bool
    W: float
    V: float
    angle: float
    orientation: int

    @property
    def alpha1(self) -> int:
        return self.alpha[0]

    def key(self) -> tuple:
        """Geometry-only identity, stable under re-ordering of the charts."""
        return tuple(np.round(self.p, 10))

    def as_dict(self) -> dict:
        return {
            "p": [float(v) for v in self.p],
            "beta": list(self.beta),
            "alpha": list(self.alpha),
            "in_B_plus": bool(self.in_B_plus),
            "W": float(self.W),
            "V": float(self.V),
            "angle": float(self.angle),
            "orientation": int(self.orientation),
            "frames": [np.asarray(f).tolist() for f in self.frames],
        }


@dataclass(frozen=True)
class TransversalCovering:
    """Ordered disk charts with one collar profile each.

    Construction certifies coverage, transversality (minimum boundary
    angle ``theta_min``) and the absence of triple boundary points.
    """

    atlas: Atlas
    w: float = 0.05
    theta_min: float = 0.2
    grid: int = 512
    _vertex_points: list = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.atlas) < 2:
            raise CoveringError("a single disk cannot cover a closed surface")
        self._certify_coverage()
        pts = _intersections(self.atlas)
        for p, a, b, ang in pts:
            if ang < self.theta_min:
                raise CoveringError(
                    f"boundaries of charts {a} and {b} meet at angle {ang:.3g} < theta_min={self.theta_min}"
                )
            for c in self.atlas:
                if c.index not in (a, b) and abs(normal_coordinate(c, p)) < 1e-9:
                    raise CoveringError(f"point {p.tolist()} lies on three boundaries")
        object.__setattr__(self, "_vertex_points", pts)

    def _certify_coverage(self):
        t = (np.arange(self.grid) + 0.5) / self.grid
        X = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1)
        depth = np.max([normal_coordinate(c, X) for c in self.atlas], axis=0)
        if np.min(depth) <= 0:
            bad = X[np.unravel_index(np.argmin(depth), depth.shape)]
            raise CoveringError(f"charts do not cover the torus (e.g. near {bad.tolist()})")

    @property
    def profile(self) -> BumpProfile:
        return BumpProfile(self.w)

    def rho(self, index: int, p) -> np.ndarray:
        return self.profile(normal_coordinate(self.atlas[index], p))

    def drho(self, index: int, p) -> np.ndarray:
        """Horizontal gradient of ``rho``; zero outside the collar."""
        chart = self.atlas[index]
        r = normal_coordinate(chart, p)
        d = self.profile.derivative(r)
        inside = (r > 0) & (r < self.w)
        grad = normal_gradient(chart, np.where(inside[..., None], p, chart.center + np.array([0.25, 0.0])))
        return np.where(inside[..., None], d[..., None] * grad, 0.0)

    @property
    def point_count(self) -> int:
        return len(self._vertex_points)


def _intersections(atlas: Atlas):
    """All boundary crossings as ``(p, a, b, angle)`` with ``a < b``."""
    out = []
    for ca, cb in combinations(atlas.charts, 2):
        for L in product(range(-2, 3), repeat=2):
            c1, c2 = ca.center, cb.center + np.array(L, dtype=float)
            r1, r2 = ca.radius, cb.radius
            d = np.linalg.norm(c2 - c1)
            if d >= r1 + r2 or d <= abs(r1 - r2):
                if abs(d - (r1 + r2)) < 1e-12 or abs(d - abs(r1 - r2)) < 1e-12:
                    out.append((normalize(c1 + (c2 - c1) * r1 / d), ca.index, cb.index, 0.0))
                continue
            e = (c2 - c1) / d
            along = (d * d + r1 * r1 - r2 * r2) / (2 * d)
            half = np.sqrt(max(r1 * r1 - along * along, 0.0))
            perp = np.array([-e[1], e[0]])
            for s in (1.0, -1.0):
                q = c1 + along * e + s * half * perp
                n1, n2 = (q - c1) / r1, (q - c2) / r2
                ang = float(np.arccos(min(1.0, abs(n1 @ n2))))
                out.append((normalize(q), ca.index, cb.index, ang))
    return out


def vertices(covering: TransversalCovering, bundle: FlatBundle | None = None) -> list[VertexRecord]:
    """Vertex records sorted by position, frames taken from ``bundle``.

    With no bundle the frames are identities (trivial bundle).
    """
    atlas, w = covering.atlas, covering.w
    pts = covering._vertex_points
    locs = np.array([p for p, *_ in pts]) if pts else np.zeros((0, 2))
    records = []
    for i, (p, a, b, ang) in enumerate(pts):
        beta = tuple(sorted((a, b), reverse=True))
        alpha = tuple(sorted((c.index for c in atlas if c.index not in beta and normal_coordinate(c, p) > 0), reverse=True))
        if not alpha:
            raise CoveringError(f"vertex {p.tolist()} is not covered")
        depths = [float(normal_coordinate(atlas[j], p)) for j in alpha]
        if min(depths) <= w:
            raise CoveringError(
                f"vertex {p.tolist()} sits at depth {min(depths):.4g} <= w={w} in a containing chart; shrink w"
            )
        bounds = [min(depths) - w]
        for c in atlas:
            if c.index not in alpha and c.index not in beta:
                bounds.append(-float(normal_coordinate(c, p)))
        others = np.delete(locs, i, axis=0)
        if len(others):
            bounds.append(0.5 * float(np.min(wrapped_distance(p, others))))
        W = 0.95 * min(bounds)
        if bundle is None:
            frames = tuple(np.eye(2) for _ in beta)
        else:
            frames = tuple(frame_matrix(bi, alpha[0], bundle, p) for bi in beta)
        g1 = normal_gradient(atlas[beta[0]], p)
        g2 = normal_gradient(atlas[beta[1]], p)
        cross = g1[0] * g2[1] - g1[1] * g2[0]
        records.append(
            VertexRecord(
                p=np.asarray(p),
                beta=beta,
                alpha=alpha,
                frames=frames,
                in_B_plus=beta[-1] > alpha[0],
                W=W,
                V=W,
                angle=ang,
                orientation=1 if cross > 0 else -1,
            )
        )
    records.sort(key=lambda v: (round(float(v.p[0]), 12), round(float(v.p[1]), 12)))
    return records


def permute_ordering(covering: TransversalCovering, permutation) -> TransversalCovering:
    """Relabel chart ``i`` as ``permutation[i - 1]``; geometry is unchanged."""
    perm = [int(v) for v in permutation]
    idx = covering.atlas.indices
    if sorted(perm) != sorted(idx) or len(perm) != len(idx):
        raise ValueError(f"{perm} is not a permutation of {idx}")
    relabel = dict(zip(idx, perm))
    atlas = Atlas(Chart(relabel[c.index], c.region) for c in covering.atlas)
    return replace(covering, atlas=atlas, _vertex_points=None)


def collar_point(covering: TransversalCovering, vertex: VertexRecord, r1, r2, return_mask: bool = False):
    """Point near ``vertex`` at normal coordinates ``(r1, r2)`` from ``beta``'s boundaries.

    When two disks overlap in a lens thinner than ``2 w``, the shrunken
    circles stop meeting for large ``(r1, r2)``: those pairs belong to no
    point. They are clamped onto the line of centres, and
    ``return_mask=True`` also returns the boolean mask of genuine points.
    """
    p = vertex.p
    c1 = p + wrapped_delta(p, covering.atlas[vertex.beta[0]].center)
    c2 = p + wrapped_delta(p, covering.atlas[vertex.beta[1]].center)
    R1 = covering.atlas[vertex.beta[0]].radius - np.asarray(r1, dtype=float)
    R2 = covering.atlas[vertex.beta[1]].radius - np.asarray(r2, dtype=float)
    d = np.linalg.norm(c2 - c1)
    e = (c2 - c1) / d
    perp = np.array([-e[1], e[0]])
    side = np.sign((p - c1) @ perp)
    along = (d * d + R1 * R1 - R2 * R2) / (2 * d)
    disc = R1 * R1 - along * along
    half = np.sqrt(np.maximum(disc, 0.0))
    x = c1 + along[..., None] * e + (side * half)[..., None] * perp
    return (x, disc >= -1e-12 * R1 * R1) if return_mask else x


def collar_lens_width(covering: TransversalCovering, vertex: VertexRecord) -> float:
    """``R1 + R2 - d`` for the two boundary disks at ``vertex``.

    Collar pairs ``(r1, r2)`` exist only while ``r1 + r2`` stays below
    this width, which matters once it drops under ``2 w``.
    """
    p = vertex.p
    a, b = covering.atlas[vertex.beta[0]], covering.atlas[vertex.beta[1]]
    d = float(np.linalg.norm(wrapped_delta(p, b.center) - wrapped_delta(p, a.center)))
    return a.radius + b.radius - d
