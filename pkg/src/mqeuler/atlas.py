"""Flat torus R^2/Z^2 with geodesic-disk charts.

Points are arrays with trailing axis 2; every function broadcasts over
leading axes. A chart's coordinate map identifies its disk with the lift
centred at the chart centre in ``[0, 1)^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

__all__ = [
    "Disk",
    "Chart",
    "Atlas",
    "normalize",
    "wrapped_delta",
    "wrapped_distance",
    "normal_coordinate",
    "normal_gradient",
    "lift_offset",
    "chart_overlap_frame",
    "overlap_components",
]

_SHIFTS = np.array(list(product((-1, 0, 1), repeat=2)), dtype=float)


def normalize(p) -> np.ndarray:
    """Representative in ``[0, 1)^2``."""
    p = np.asarray(p, dtype=float)
    out = np.mod(p, 1.0)
    return np.where(out >= 1.0, 0.0, out)


def wrapped_delta(p, q) -> np.ndarray:
    """Shortest displacement ``q - p`` over the nine nearest lattice translates."""
    d = normalize(q) - normalize(p)
    cand = d[..., None, :] + _SHIFTS
    k = np.argmin(np.einsum("...ij,...ij->...i", cand, cand), axis=-1)
    return np.take_along_axis(cand, k[..., None, None], axis=-2)[..., 0, :]


def wrapped_distance(p, q) -> np.ndarray:
    return np.linalg.norm(wrapped_delta(p, q), axis=-1)


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not 0.0 < self.radius < 0.5:
            # larger disks wrap onto themselves and reach the cut locus
            raise ValueError(f"disk radius must lie in (0, 0.5), got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in normalize(self.center)))


@dataclass(frozen=True)
class Chart:
    index: int
    region: Disk

    @property
    def center(self) -> np.ndarray:
        return np.array(self.region.center)

    @property
    def radius(self) -> float:
        return self.region.radius

    def lift(self, p) -> np.ndarray:
        """Lift of ``p`` nearest the chart centre (the chart's planar coordinates)."""
        return self.center + wrapped_delta(self.center, p)


def lift_offset(chart: Chart, p) -> np.ndarray:
    """Lattice vector ``t`` with ``chart.lift(p) = normalize(p) + t``."""
    return np.rint(chart.lift(p) - normalize(p))


def normal_coordinate(chart: Chart, p) -> np.ndarray:
    """Signed distance to the chart boundary, positive inside."""
    return chart.radius - wrapped_distance(chart.center, p)


def normal_gradient(chart: Chart, p) -> np.ndarray:
    """Gradient of :func:`normal_coordinate` (the inward unit normal).

    Undefined at the centre, which lies far from every collar we use.
    """
    d = wrapped_delta(chart.center, p)
    return -d / np.linalg.norm(d, axis=-1, keepdims=True)


def overlap_components(a: Chart, b: Chart) -> list[tuple[int, int]]:
    """Lattice translations labelling the connected components of ``a`` meet ``b``.

    A label ``lam`` means ``b.lift(x) = a.lift(x) + lam`` on that component.
    """
    out = []
    for L in product(range(-2, 3), repeat=2):
        # translate L of b's lift meets a's lift -> b coordinate = a coordinate - L
        if np.linalg.norm(a.center - (b.center + L)) < a.radius + b.radius:
            out.append((-L[0], -L[1]))
    return out


def chart_overlap_frame(a: Chart, b: Chart, p=None) -> tuple[int, int]:
    """Translation taking ``a``'s lifted coordinates to ``b``'s.

    Two disks on the torus can overlap in several components carrying
    different translations, so a point ``p`` in the overlap selects one;
    without ``p`` the overlap must be connected.
    """
    if p is None:
        comps = overlap_components(a, b)
        if not comps:
            raise ValueError(f"charts {a.index} and {b.index} are disjoint")
        if len(comps) > 1:
            raise ValueError(f"charts {a.index} and {b.index} overlap in {len(comps)} components; pass a point")
        return comps[0]
    p = np.asarray(p, dtype=float)
    if normal_coordinate(a, p) < 0 or normal_coordinate(b, p) < 0:
        raise ValueError(f"point {p.tolist()} is not in both charts {a.index} and {b.index}")
    lam = b.lift(p) - a.lift(p)
    return int(round(lam[0])), int(round(lam[1]))


class Atlas:
    """Charts keyed by their ordering index."""

    def __init__(self, charts):
        charts = list(charts)
        idx = [c.index for c in charts]
        if len(set(idx)) != len(idx):
            raise ValueError("chart indices must be distinct")
        if any(i < 1 for i in idx):
            raise ValueError("chart indices must be positive")
        self.charts = sorted(charts, key=lambda c: c.index)
        self._by_index = {c.index: c for c in self.charts}

    @classmethod
    def from_disks(cls, disks, indices=None) -> "Atlas":
        indices = range(1, len(disks) + 1) if indices is None else indices
        return cls(Chart(int(i), d) for i, d in zip(indices, disks))

    def __getitem__(self, index: int) -> Chart:
        return self._by_index[index]

    def __iter__(self):
        return iter(self.charts)

    def __len__(self):
        return len(self.charts)

    @property
    def indices(self) -> list[int]:
        return [c.index for c in self.charts]

    def containing(self, p, margin: float = 0.0) -> list[int]:
        """Indices of charts with ``p`` at depth greater than ``margin``."""
        return [c.index for c in self.charts if normal_coordinate(c, p) > margin]
