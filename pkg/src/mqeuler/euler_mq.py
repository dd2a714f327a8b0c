"""Mathai-Quillen superconnection curvature and global Euler integrals.

Flat case. In a reference trivialization with fiber coordinate ``y``,
chart ``a`` sees ``y_a = B_a y`` and the fiber metric is
``G(x) = sum_a rho_a(x) T^a S_a`` with ``S_a = B_a^T B_a``. The
superconnection ``d + c_T(Y)`` has curvature

    sum_mu dx^mu (d_mu G y)_m e^m  +  dy^l G_lm e^m  -  dy^k i_k  -  y^T G y,

where ``e^m`` and ``i_k`` act on the exterior algebra of the fiber. The
middle term only ever contributes below top degree, so dropping it leaves
the supertrace of the exponential unchanged pointwise. The surviving top
form is ``{exp(sum_a T^a d rho_a ^ (S_a y . dy) - y^T G y)}`` in degree 4n.

Orientation: the total space is oriented base first, ``dx1 dx2 dy1 dy2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .atlas import normal_coordinate
from .covering import TransversalCovering, VertexRecord, collar_lens_width, collar_point, vertices
from .flat_bundle import FlatBundle, GeneralBundle
from .gaussian_fiber import gaussian_moment
from .graded_forms import (
    GeneratorSet,
    GradedElement,
    exp_truncated,
    exterior_op,
    interior_op,
    supertrace,
)
from .quadrature import CubatureResult, QuadratureError, adaptive_cubature, tree_sum

__all__ = [
    "SuperconnectionData",
    "EulerResult",
    "superconnection_data",
    "chart_frames",
    "curvature_flat",
    "reduced_curvature_flat",
    "supertrace_top",
    "top_form_flat",
    "fiber_reduced_density",
    "vertex_collar_integral",
    "euler_total_flat",
    "curvature_general",
    "euler_density_general",
    "euler_total_general",
]

EPRIME = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class SuperconnectionData:
    """Fiber-metric data of the flat superconnection at base points ``x``.

    ``rho``, ``drho`` and ``frames`` are indexed by ``charts`` along the
    axis after the batch axes; ``frames[..., a]`` maps reference fiber
    coordinates to chart ``charts[a]``'s.
    """

    x: np.ndarray
    charts: tuple[int, ...]
    rho: np.ndarray
    drho: np.ndarray
    frames: np.ndarray
    T: float

    def __post_init__(self):
        if np.any(self.rho < 0):
            raise ValueError("bump weights must be nonnegative")
        if np.any(np.max(self.rho, axis=-1) <= 0):
            raise ValueError("no chart has positive weight at some base point")

    @property
    def powers(self) -> np.ndarray:
        return float(self.T) ** np.asarray(self.charts, dtype=float)

    @property
    def S(self) -> np.ndarray:
        return np.swapaxes(self.frames, -1, -2) @ self.frames

    @property
    def G(self) -> np.ndarray:
        return np.einsum("...a,a,...aij->...ij", self.rho, self.powers, self.S)

    @property
    def dG(self) -> np.ndarray:
        """``d_mu G``, shape ``(..., 2n_base, m, m)``."""
        return np.einsum("...am,a,...aij->...mij", self.drho, self.powers, self.S)


def chart_frames(bundle: FlatBundle, reference: int, x, indices=None) -> np.ndarray:
    """Frames ``B_a(x)`` relative to chart ``reference`` for each chart in ``indices``.

    Uses the lift of ``x`` nearest each chart centre, so the result is
    locally constant wherever the chart contains ``x``.
    """
    atlas = bundle.atlas
    indices = atlas.indices if indices is None else list(indices)
    x = np.asarray(x, dtype=float)
    ref = atlas[reference].lift(x)
    out = np.empty(x.shape[:-1] + (len(indices), bundle.rank, bundle.rank))
    for a, idx in enumerate(indices):
        lam = np.rint(ref - atlas[idx].lift(x)).astype(int).reshape(-1, 2)
        flat = out[..., a, :, :].reshape(-1, bundle.rank, bundle.rank)
        for key in {tuple(v) for v in lam}:
            flat[np.all(lam == key, axis=-1)] = bundle.holonomy(key)
        out[..., a, :, :] = flat.reshape(out[..., a, :, :].shape)
    return out


def superconnection_data(bundle: FlatBundle, covering: TransversalCovering, x, T=1.0, reference=None):
    """Assemble :class:`SuperconnectionData` at points ``x``.

    The reference chart defaults to the highest-index chart containing the
    first point.
    """
    x = np.asarray(x, dtype=float)
    idx = covering.atlas.indices
    if reference is None:
        reference = max(covering.atlas.containing(x.reshape(-1, 2)[0]))
    rho = np.stack([covering.rho(i, x) for i in idx], axis=-1)
    drho = np.stack([covering.drho(i, x) for i in idx], axis=-2)
    frames = chart_frames(bundle, reference, x, idx)
    return SuperconnectionData(x, tuple(idx), rho, drho, frames, float(T))


@lru_cache(maxsize=None)
def _fiber_ops(m: int):
    return (np.stack([exterior_op(k, m) for k in range(m)]), np.stack([interior_op(k, m) for k in range(m)]))


def _curvature(data: SuperconnectionData, y, include_metric_term: bool) -> GradedElement:
    y = np.asarray(y, dtype=float)
    m = y.shape[-1]
    gens = GeneratorSet.standard(m // 2)
    ext, intr = _fiber_ops(m)
    dim = 1 << m
    G = data.G
    batch = np.broadcast_shapes(G.shape[:-2], y.shape[:-1])
    coeffs = np.zeros(batch + (gens.size, dim, dim))
    dGy = np.einsum("...mij,...j->...mi", data.dG, y)
    for mu, name in enumerate(gens.horizontal):
        mask, _ = gens.mask((name,))
        coeffs[..., mask, :, :] = np.einsum("...i,iab->...ab", dGy[..., mu, :], ext)
    for l, name in enumerate(gens.vertical):
        mask, _ = gens.mask((name,))
        coeffs[..., mask, :, :] = -intr[l]
        if include_metric_term:
            coeffs[..., mask, :, :] += np.einsum("...i,iab->...ab", G[..., l, :], ext)
    norm = np.einsum("...i,...ij,...j->...", y, G, y)
    coeffs[..., 0, :, :] = -norm[..., None, None] * np.eye(dim)
    return GradedElement(gens, coeffs, dim)


def curvature_flat(data: SuperconnectionData, y) -> GradedElement:
    """Full curvature of the flat Mathai-Quillen superconnection at ``(x, y)``."""
    return _curvature(data, y, True)


def reduced_curvature_flat(data: SuperconnectionData, y) -> GradedElement:
    """Curvature without the ``dy ^ dy_hat`` term; same supertrace exponential."""
    return _curvature(data, y, False)


def supertrace_top(curvature: GradedElement):
    """Top-degree coefficient of ``tr_s exp(curvature)``."""
    return supertrace(exp_truncated(curvature)).top()


def top_form_flat(data: SuperconnectionData, y):
    """Top coefficient of ``exp(sum_a T^a d rho_a ^ (S_a y . dy) - |Y|^2)``.

    Expanded directly as a sum over ordered choices of ``2n`` distinct
    charts, each contributing one horizontal and one vertical leg.
    """
    y = np.asarray(y, dtype=float)
    m = y.shape[-1]
    gens = GeneratorSet.standard(m // 2)
    forms = []
    Sy = np.einsum("...aij,...j->...ai", data.S, y)
    for a, power in enumerate(data.powers):
        # d rho_a ^ (S_a y) . dy as a scalar graded element
        c = np.zeros(np.broadcast_shapes(Sy.shape[:-2], data.drho.shape[:-2]) + (gens.size,))
        for mu, hname in enumerate(gens.horizontal):
            for l, vname in enumerate(gens.vertical):
                mask, sign = gens.mask((hname, vname))
                c[..., mask] += sign * power * data.drho[..., a, mu] * Sy[..., a, l]
        forms.append(c)
    # the two-forms commute and square to zero: the product of (1 + w_a)
    total = GradedElement.scalar(gens, np.ones(forms[0].shape[:-1]))
    for c in forms:
        total = total + total * GradedElement(gens, c)
    norm = np.einsum("...i,...ij,...j->...", y, data.G, y)
    return total.top() * np.exp(-norm)


def fiber_reduced_density(G, S1, S2, power: float):
    """``T^(b1+b2) int (S1 y x S2 y) exp(-y^T G y) dy`` for ``n = 1``.

    ``a x b = a1 b2 - a2 b1``; the quadratic form ``y^T S1 E' S2 y`` is
    symmetrized and integrated with Gaussian moments.
    """
    M = S1 @ EPRIME @ S2
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    G = np.asarray(G, dtype=float)
    val = (
        M[..., 0, 0] * gaussian_moment(G, (2, 0))
        + 2.0 * M[..., 0, 1] * gaussian_moment(G, (1, 1))
        + M[..., 1, 1] * gaussian_moment(G, (0, 2))
    )
    return power * val


@dataclass(frozen=True)
class EulerResult:
    value: float
    error: float
    contributions: tuple = ()
    converged: bool = True


def _collar_map(covering: TransversalCovering, vertex: VertexRecord, sigma):
    """Base points for log-weights ``sigma = (log rho_b1, log rho_b2)``."""
    prof = covering.profile
    r1 = prof.log_inverse(sigma[..., 0])
    r2 = prof.log_inverse(sigma[..., 1])
    return collar_point(covering, vertex, r1, r2, return_mask=True)


def vertex_collar_integral(
    vertex: VertexRecord,
    bundle: FlatBundle,
    covering: TransversalCovering,
    T: float = 1.0,
    window=None,
    abs_tol: float = 1e-11,
    rel_tol: float = 1e-9,
    max_cells: int = 20000,
    depth: float = 40.0,
) -> CubatureResult:
    """Euler integral over the collar square of ``vertex`` at metric parameter ``T``.

    With ``u_i = rho_{beta_i}`` the collar square is ``[0, 1]^2`` and
    ``d rho_b1 ^ d rho_b2 = orientation * du1 du2``. Integration runs in
    ``log u`` so the Gaussian-scale region is resolved for any ``T``.
    ``window`` is an optional function of base points multiplying the
    integrand. The full metric, including every other chart's weight, is
    used.
    """
    atlas = covering.atlas
    b1, b2 = vertex.beta
    S1 = vertex.frames[0].T @ vertex.frames[0]
    S2 = vertex.frames[1].T @ vertex.frames[1]
    others = [i for i in atlas.indices if i not in vertex.beta]
    lnT = np.log(T)
    const = -vertex.orientation / (2 * np.pi) ** 2

    def f(sig):
        x, real = _collar_map(covering, vertex, sig)
        u = np.exp(sig)
        G = u[:, 0, None, None] * T**b1 * S1 + u[:, 1, None, None] * T**b2 * S2
        # frames of the other charts are constant on the square but chosen by position
        frames = chart_frames(bundle, vertex.alpha1, x, others)
        for a, idx in enumerate(others):
            r = covering.rho(idx, x)
            if np.any(r > 0):
                G = G + (r * T**idx)[:, None, None] * np.swapaxes(frames[:, a], -1, -2) @ frames[:, a]
        val = fiber_reduced_density(G, S1, S2, T ** (b1 + b2)) * u[:, 0] * u[:, 1] * real
        if window is not None:
            val = val * window(x)
        return const * val

    lo = np.array([-(depth + b1 * max(lnT, 0.0)), -(depth + b2 * max(lnT, 0.0))])
    hi = np.zeros(2)
    radius = getattr(window, "radius", None)
    if radius is not None:
        # normal coordinates are 1-Lipschitz: clip the box to the window's reach
        prof = covering.profile
        for i, b in enumerate(vertex.beta):
            rc = float(normal_coordinate(atlas[b], window.center))
            r_lo, r_hi = rc - radius, min(rc + radius, covering.w)
            if r_hi <= 0 or r_lo >= covering.w:
                return CubatureResult(0.0, 0.0, 0, True)
            if r_lo > 0:
                lo[i] = max(lo[i], float(np.log(prof(r_lo))))
            hi[i] = float(np.log(prof(r_hi))) if r_hi < covering.w else 0.0
    return _lens_cubature(f, covering, vertex, lo, hi, abs_tol, rel_tol, max_cells)


def _lens_cubature(f, covering, vertex, lo, hi, abs_tol, rel_tol, max_cells) -> CubatureResult:
    """Integrate ``f`` over the part of the log-weight box that maps to real points.

    For a thin lens the feasible set is ``r1 + r2 <= L``; the inner
    variable is stretched onto ``[lo2, hi2(sigma1)]`` so each piece is a
    rectangle, split at the kink ``r1 = L - w``, and graded quadratically
    towards the lens edge where base points have a square-root profile.
    """
    w = covering.w
    L = collar_lens_width(covering, vertex)
    if L >= 2 * w:
        return adaptive_cubature(f, lo, hi, abs_tol, rel_tol, max_cells, initial=8)
    prof = covering.profile
    top1 = min(hi[0], float(prof.log_value(min(L, w))))
    if top1 <= lo[0]:
        return CubatureResult(0.0, 0.0, 0, True)

    def g(P):
        s1 = P[:, 0]
        rest = L - prof.log_inverse(s1)
        top = np.minimum(hi[1], np.where(rest >= w, 0.0, prof.log_value(np.minimum(rest, w))))
        span = np.maximum(top - lo[1], 0.0)
        # base points move like sqrt(distance to the lens edge); t = 1 - (1 - tau)^2 undoes it
        q = 1.0 - P[:, 1]
        return f(np.stack([s1, lo[1] + (1.0 - q * q) * span], axis=-1)) * span * 2.0 * q

    cuts = [lo[0], top1]
    if L > w:
        kink = float(prof.log_value(L - w))
        if lo[0] < kink < top1:
            cuts.insert(1, kink)
    parts = [
        adaptive_cubature(g, [a, 0.0], [b, 1.0], abs_tol / (len(cuts) - 1), rel_tol, max_cells, initial=8)
        for a, b in zip(cuts, cuts[1:])
    ]
    return CubatureResult(
        tree_sum(r.value for r in parts),
        float(sum(r.error for r in parts)),
        sum(r.cells for r in parts),
        all(r.converged for r in parts),
    )


def euler_total_flat(
    bundle: FlatBundle,
    covering: TransversalCovering,
    T: float = 1.0,
    abs_tol: float = 1e-11,
    rel_tol: float = 1e-9,
    strict: bool = False,
) -> EulerResult:
    """Euler number of a flat bundle from the fiber-reduced Mathai-Quillen form.

    ``d rho_a ^ d rho_b`` is supported where two collars overlap, which
    for a transversal covering with thin collars is one collar square per
    vertex, so the base integral is a sum of vertex contributions.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    verts = vertices(covering, bundle)
    if bundle.is_trivial():
        return EulerResult(0.0, 0.0, tuple((v.key(), 0.0) for v in verts))
    results = [vertex_collar_integral(v, bundle, covering, T, None, abs_tol, rel_tol) for v in verts]
    if strict and not all(r.converged for r in results):
        bad = max(r.error for r in results)
        raise QuadratureError(f"collar cubature did not converge (achieved error {bad:.3g})")
    value = tree_sum(r.value for r in results)
    error = float(np.sum([r.error for r in results]))
    return EulerResult(
        value,
        error,
        tuple((v.key(), r.value) for v, r in zip(verts, results)),
        all(r.converged for r in results),
    )


# -- general (non-flat) path -------------------------------------------------


@lru_cache(maxsize=None)
def _derivation_ops(m: int):
    """``D[i, j]``: the operator induced on the fiber exterior algebra by ``E_ij``."""
    ext, intr = _fiber_ops(m)
    return -np.einsum("jab,ibc->ijac", ext, intr)


def curvature_general(bundle: GeneralBundle, x, y) -> GradedElement:
    """``A^2 = R + [nabla, c(y)] + c(y)^2`` on the universal cover at ``(x, y)``.

    The connection matrices act on the fiber exterior algebra as
    derivations; the Euclidean fiber metric is parallel, so the
    tautological section has ``nabla y = dy + omega y``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = y.shape[-1]
    gens = GeneratorSet.standard(m // 2)
    dim = 1 << m
    ext, intr = _fiber_ops(m)
    D = _derivation_ops(m)
    omega = bundle.connection(x)
    R = bundle.curvature(x)
    batch = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])

    def single(names, mat):
        mask, sign = gens.mask(names)
        c = np.zeros(batch + (gens.size, dim, dim))
        c[..., mask, :, :] = sign * mat
        return GradedElement(gens, c, dim)

    cliff = np.einsum("...k,kab->...ab", y, ext - intr)
    cZ = single((), cliff)
    omega_t = sum(single((h,), np.einsum("...ij,ijab->...ab", omega[..., mu, :, :], D)) for mu, h in enumerate(gens.horizontal))
    dterm = sum(single((v,), ext[k] - intr[k]) for k, v in enumerate(gens.vertical))
    curv = single(tuple(gens.horizontal[:2]), np.einsum("...ij,ijab->...ab", R, D))
    return curv + dterm + omega_t * cZ + cZ * omega_t + cZ * cZ


def euler_density_general(bundle: GeneralBundle, x, order: int = 4) -> np.ndarray:
    """``(2 pi)^-2`` times the fiber integral of ``tr_s exp(A^2)`` at base points ``x``.

    Coefficients are polynomials in ``y`` of degree at most 4 times
    ``exp(-|y|^2)``, so Gauss-Hermite with ``order >= 3`` is exact.
    """
    x = np.asarray(x, dtype=float)
    t, wt = np.polynomial.hermite.hermgauss(order)
    Y = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    W = np.outer(wt, wt).ravel() * np.exp(np.sum(Y**2, axis=-1))
    top = supertrace_top(curvature_general(bundle, x[..., None, :], Y))
    return np.einsum("...q,q->...", top, W) / (2 * np.pi) ** 2


def euler_total_general(
    bundle: GeneralBundle, abs_tol: float = 1e-10, rel_tol: float = 1e-10, order: int = 4
) -> EulerResult:
    """Euler number of a plane bundle with a metric connection over the torus.

    Only the top-degree part of the characteristic form survives
    integration over a total space of dimension ``2 rk``, so no further
    multiplicative class is needed.
    """
    if bundle.rank != 2:
        raise ValueError("the general path needs rank equal to the base dimension (2)")
    res = adaptive_cubature(lambda X: euler_density_general(bundle, X, order), [0.0, 0.0], [1.0, 1.0], abs_tol, rel_tol, initial=4)
    return EulerResult(res.value, res.error, (), res.converged)
