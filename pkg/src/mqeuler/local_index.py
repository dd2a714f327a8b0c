"""Local indices at vertices of a transversal covering (rank 2 over a surface).

At a vertex ``p`` with boundary charts ``b1 > b2`` and top containing chart
``a1``, the localized integrand uses the metric
``Q = u1 T^b1 S1 + u2 T^b2 S2 + T^a1 Id`` in the ``a1`` frame, where
``u_i = rho_{b_i}`` parametrize the collar square. Substituting
``s_i = u_i T^(b_i - a1)`` removes every power of ``T`` except in the box
``s_i < T^(b_i - a1)`` and in the cutoff, so the limit is an improper
integral over ``(0, inf)^2`` when ``p`` is in ``B_+``. Both integrals run
in ``sigma = log s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .atlas import wrapped_delta
from .covering import TransversalCovering, VertexRecord, collar_point
from .euler_mq import vertex_collar_integral
from .flat_bundle import FlatBundle
from .gaussian_fiber import fiber_integrate, wedge_quadratic
from .quadrature import QuadratureError, adaptive_cubature

__all__ = [
    "RadialCutoff",
    "Window",
    "TSchedule",
    "LocalIndexResult",
    "nu_at_T",
    "nu_scale_free",
    "nu_extrapolated",
    "fit_tail",
    "gamma_diagnostic",
    "loglog_slope",
    "decay_outside_Bplus",
    "collar_extent",
]

SIGMA_MIN = -40.0


def _smoothstep(t):
    """C-infinity step from 0 (``t <= 0``) to 1 (``t >= 1``)."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class RadialCutoff:
    """Bump equal to 1 within ``plateau`` of ``center`` and 0 beyond ``radius``."""

    center: np.ndarray
    radius: float
    plateau: float

    def __post_init__(self):
        if not 0 < self.plateau < self.radius:
            raise ValueError("need 0 < plateau < radius")

    def __call__(self, x) -> np.ndarray:
        d = np.linalg.norm(wrapped_delta(self.center, x), axis=-1)
        return 1.0 - _smoothstep((d - self.plateau) / (self.radius - self.plateau))


Window = RadialCutoff


@dataclass(frozen=True)
class TSchedule:
    """Increasing metric parameters ``T > 1`` and the tail model used to extrapolate.

    ``model`` is ``"log"`` for ``nu + b (log T)^(2n-1) / T`` or
    ``"log+inv"`` which adds a ``c / T`` term.
    """

    values: tuple[float, ...] = tuple(math.exp(k) for k in range(2, 8))
    model: str = "log"
    n: int = 1

    def __post_init__(self):
        v = tuple(float(t) for t in self.values)
        object.__setattr__(self, "values", v)
        if any(t <= 1 for t in v):
            raise ValueError("schedule entries must exceed 1")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("schedule must be strictly increasing")
        if self.model not in ("log", "log+inv"):
            raise ValueError(f"unknown extrapolation model {self.model!r}")


@dataclass
class LocalIndexResult:
    vertex: VertexRecord
    T: tuple[float, ...]
    value_at_T: tuple[float, ...]
    nu: float
    error: float
    scale_free_value: float
    scale_free_error: float
    fit: dict = field(default_factory=dict)

    @property
    def agreement(self) -> bool:
        return abs(self.nu - self.scale_free_value) <= self.error + self.scale_free_error

    def as_dict(self) -> dict:
        return {
            "vertex": self.vertex.as_dict(),
            "T": list(self.T),
            "value_at_T": list(self.value_at_T),
            "nu": self.nu,
            "error": self.error,
            "scale_free_value": self.scale_free_value,
            "scale_free_error": self.scale_free_error,
            "agreement": self.agreement,
            "fit": dict(self.fit),
        }


def _require_b_plus(vertex: VertexRecord):
    if not vertex.in_B_plus:
        raise ValueError(f"vertex at {vertex.p.tolist()} is not in B_+")


def _integrand(vertex: VertexRecord):
    """Fiber-reduced integrand in ``sigma = log s``, including all constants."""
    wq = wedge_quadratic(vertex.frames)
    S1, S2 = (B.T @ B for B in vertex.frames)
    # (d rho T^b dh / 4 pi)^2 with d rho1 ^ d rho2 = orientation du1 du2 and base-first order
    const = -vertex.orientation / (4 * np.pi) ** 2

    def f(sig):
        s = np.exp(sig)
        Q = s[:, 0, None, None] * S1 + s[:, 1, None, None] * S2 + np.eye(2)
        return const * fiber_integrate(wq, Q) * s[:, 0] * s[:, 1]

    return f, wq.is_zero()


def default_cutoff(vertex: VertexRecord) -> RadialCutoff:
    return RadialCutoff(vertex.p, vertex.V, 0.5 * vertex.V)


def nu_at_T(
    vertex: VertexRecord,
    bundle: FlatBundle | None,
    covering: TransversalCovering,
    T: float,
    cutoff: RadialCutoff | None = None,
    abs_tol: float = 1e-13,
    rel_tol: float = 1e-11,
    max_cells: int = 40000,
    full: bool = False,
):
    """Localized integral at vertex ``vertex`` for metric parameter ``T``.

    ``bundle`` is unused beyond the frames stored on the vertex; it is
    accepted for a uniform call signature.
    """
    _require_b_plus(vertex)
    cutoff = default_cutoff(vertex) if cutoff is None else cutoff
    if cutoff.radius > vertex.V * (1 + 1e-12):
        raise ValueError("cutoff must be supported in V_p")
    f, zero = _integrand(vertex)
    if zero:
        return (0.0, 0.0) if full else 0.0
    b1, b2 = vertex.beta
    a1 = vertex.alpha1
    lnT = math.log(T)
    prof = covering.profile

    def g(sig):
        r1 = prof.log_inverse(sig[:, 0] + (a1 - b1) * lnT)
        r2 = prof.log_inverse(sig[:, 1] + (a1 - b2) * lnT)
        x, real = collar_point(covering, vertex, r1, r2, return_mask=True)
        return f(sig) * cutoff(x) * real

    hi = [(b1 - a1) * lnT, (b2 - a1) * lnT]
    res = adaptive_cubature(g, [SIGMA_MIN, SIGMA_MIN], hi, abs_tol, rel_tol, max_cells, initial=8)
    if not res.converged:
        raise QuadratureError(f"nu_at_T at T={T:g} stopped at error {res.error:.3g}")
    return (res.value, res.error) if full else res.value


def nu_scale_free(
    vertex: VertexRecord,
    bundle: FlatBundle | None = None,
    sigma_max: float = 40.0,
    abs_tol: float = 1e-13,
    rel_tol: float = 1e-11,
    full: bool = False,
):
    """``T``-free limit of :func:`nu_at_T` as an integral over ``(0, inf)^2``.

    The integrand decays like ``|s|^-3``, so the truncated tail beyond
    ``log s = sigma_max`` is below ``exp(-sigma_max)``.
    """
    _require_b_plus(vertex)
    f, zero = _integrand(vertex)
    if zero:
        return (0.0, 0.0) if full else 0.0
    res = adaptive_cubature(f, [SIGMA_MIN, SIGMA_MIN], [sigma_max, sigma_max], abs_tol, rel_tol, 40000, initial=8)
    if not res.converged:
        raise QuadratureError(f"scale-free integral stopped at error {res.error:.3g}")
    err = res.error + math.exp(-min(sigma_max, -SIGMA_MIN))
    return (res.value, err) if full else res.value


def fit_tail(T, values, model: str = "log", n: int = 1) -> dict:
    """Least-squares fit of ``values(T)`` to the extrapolation model."""
    T = np.asarray(T, dtype=float)
    v = np.asarray(values, dtype=float)
    cols = [np.ones_like(T), np.log(T) ** (2 * n - 1) / T]
    if model == "log+inv":
        cols.append(1.0 / T)
    X = np.stack(cols, axis=-1)
    coef, *_ = np.linalg.lstsq(X, v, rcond=None)
    resid = float(np.max(np.abs(X @ coef - v))) if len(v) else 0.0
    spread = float(abs(v[-1] - v[-2])) if len(v) >= 2 else float("inf")
    return {
        "nu": float(coef[0]),
        "coefficients": [float(c) for c in coef[1:]],
        "residual": resid,
        "spread": spread,
        "error": max(resid, spread),
        "model": model,
    }


def nu_extrapolated(
    vertex: VertexRecord,
    bundle: FlatBundle | None,
    covering: TransversalCovering,
    schedule: TSchedule | None = None,
    cutoff: RadialCutoff | None = None,
    residual_tol: float = 1e-2,
) -> LocalIndexResult:
    """``T -> infinity`` limit from a schedule of finite-``T`` values.

    The error bar is the larger of the fit residual and the spread of the
    last two schedule values. A residual above ``residual_tol`` raises.
    """
    schedule = TSchedule() if schedule is None else schedule
    if len(schedule.values) < 3:
        raise ValueError("extrapolation needs at least three schedule entries")
    vals = [nu_at_T(vertex, bundle, covering, T, cutoff) for T in schedule.values]
    fit = fit_tail(schedule.values, vals, schedule.model, schedule.n)
    if fit["residual"] > residual_tol:
        raise QuadratureError(f"tail fit residual {fit['residual']:.3g} exceeds {residual_tol:g}")
    sf, sf_err = nu_scale_free(vertex, bundle, full=True)
    return LocalIndexResult(vertex, schedule.values, tuple(vals), fit["nu"], fit["error"], sf, sf_err, fit)


def gamma_diagnostic(
    vertex: VertexRecord,
    bundle: FlatBundle | None,
    covering: TransversalCovering,
    T: float,
    step: float = 0.02,
    cutoff: RadialCutoff | None = None,
) -> float:
    """Centered finite-difference ``d/dT`` of :func:`nu_at_T` with relative step ``step``."""
    h = step * T
    if h <= 1e3 * np.finfo(float).eps * T:
        raise ValueError("finite-difference step underflows")
    up = nu_at_T(vertex, bundle, covering, T + h, cutoff, abs_tol=1e-15, rel_tol=1e-13)
    dn = nu_at_T(vertex, bundle, covering, T - h, cutoff, abs_tol=1e-15, rel_tol=1e-13)
    return (up - dn) / (2 * h)


def loglog_slope(T, values) -> float:
    """Least-squares slope of ``log |values|`` against ``log T``."""
    x = np.log(np.asarray(T, dtype=float))
    y = np.log(np.abs(np.asarray(values, dtype=float)))
    return float(np.polyfit(x, y, 1)[0])


def collar_extent(covering: TransversalCovering, vertex: VertexRecord) -> float:
    """Distance from ``vertex`` to the farthest point of its collar square."""
    w = covering.w
    pts = collar_point(covering, vertex, np.array([w, 0.0, w]), np.array([0.0, w, w]))
    return float(np.max(np.linalg.norm(pts - vertex.p, axis=-1)))


def decay_outside_Bplus(
    window: RadialCutoff,
    bundle: FlatBundle,
    covering: TransversalCovering,
    schedule: TSchedule | None = None,
    verts=None,
) -> list[float]:
    """Windowed Euler-form integral at each ``T`` of the schedule.

    The window must stay clear of every ``V_p`` ball at ``B_+`` vertices.
    """
    from .covering import vertices as _vertices

    schedule = TSchedule() if schedule is None else schedule
    verts = _vertices(covering, bundle) if verts is None else verts
    for v in verts:
        if v.in_B_plus:
            d = float(np.linalg.norm(wrapped_delta(v.p, window.center)))
            if d < window.radius + v.V:
                raise ValueError(f"window meets the V_p ball of B_+ vertex {v.p.tolist()}")
    hit = [
        v
        for v in verts
        if float(np.linalg.norm(wrapped_delta(v.p, window.center))) < window.radius + collar_extent(covering, v)
    ]
    out = []
    for T in schedule.values:
        total = 0.0
        for v in hit:
            total += vertex_collar_integral(v, bundle, covering, T, window, abs_tol=1e-15, rel_tol=1e-10).value
        out.append(total)
    return out
