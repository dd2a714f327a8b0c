"""Scenario files, verification runs, ordering studies and reports.

A scenario is a YAML mapping; unknown keys are errors. Lengths are in
torus units (the torus is ``R^2 / Z^2``)::

    name: default-shear
    atlas:
      disks:                       # listed in chart order 1, 2, ...
        - {center: [0.0, 0.0], radius: 0.4}
      order: [1, 2, 3, 4]          # optional relabelling of the disks
    bump: {w: 0.05, theta_min: 0.2}
    bundle:                        # kind: trivial | flat | line
      kind: flat
      A: [[1, 1], [0, 1]]          # holonomy along e1
      B: [[1, 2], [0, 1]]          # holonomy along e2
    schedule: {log_T: [2, 3, 4, 5, 6, 7], model: log}
    tolerances: {abs: 1.0e-11, rel: 1.0e-9, match_floor: 1.0e-9}
    seed: 0

Line bundles use ``{kind: line, k: 1, eps: 0.3}`` and need no atlas.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations as _all_permutations

import numpy as np
import yaml

from .atlas import Atlas, Disk, wrapped_distance
from .covering import TransversalCovering, permute_ordering, vertices
from .euler_mq import euler_total_flat, euler_total_general, vertex_collar_integral
from .flat_bundle import FlatBundle, curvature_integral, from_holonomy, line_bundle
from .local_index import (
    RadialCutoff,
    decay_outside_Bplus,
    gamma_diagnostic,
    loglog_slope,
    TSchedule,
    default_cutoff,
    nu_extrapolated,
    nu_scale_free,
)
from .quadrature import tree_sum

__all__ = [
    "ScenarioError",
    "Scenario",
    "load_scenario",
    "dump_scenario",
    "builtin_scenario",
    "BUILTIN_SCENARIOS",
    "run_verify",
    "run_ordering_study",
    "run_diagnostics",
    "emit_report",
    "parse_report",
    "worker_count",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1
WORKERS_ENV = "MQEULER_WORKERS"


class ScenarioError(ValueError):
    """Malformed scenario description."""


_SCHEMA = {
    "name": None,
    "atlas": {"disks": None, "order": None},
    "bump": {"w": None, "theta_min": None},
    "bundle": {"kind": None, "A": None, "B": None, "k": None, "eps": None},
    "schedule": {"log_T": None, "model": None},
    "tolerances": {"abs": None, "rel": None, "match_floor": None},
    "seed": None,
}


def _check_keys(data, schema, path=""):
    if not isinstance(data, dict):
        raise ScenarioError(f"{path or 'scenario'} must be a mapping")
    for key, value in data.items():
        if key not in schema:
            raise ScenarioError(f"unknown key {path + str(key)!r}")
        if isinstance(schema[key], dict) and value is not None:
            _check_keys(value, schema[key], f"{path}{key}.")


_DEFAULT_DISKS = [
    {"center": [0.0, 0.0], "radius": 0.4},
    {"center": [0.5, 0.0], "radius": 0.4},
    {"center": [0.0, 0.5], "radius": 0.4},
    {"center": [0.5, 0.5], "radius": 0.4},
]


@dataclass
class Scenario:
    """Parsed scenario; ``raw`` keeps the normalized mapping for round trips."""

    name: str
    disks: list
    order: list | None
    w: float
    theta_min: float
    bundle: dict
    log_T: list
    model: str
    abs_tol: float
    rel_tol: float
    match_floor: float
    seed: int
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        _check_keys(data, _SCHEMA)
        atlas = data.get("atlas") or {}
        bump = data.get("bump") or {}
        bundle = dict(data.get("bundle") or {"kind": "trivial"})
        kind = bundle.get("kind", "trivial")
        if kind not in ("trivial", "flat", "line"):
            raise ScenarioError(f"bundle.kind must be trivial, flat or line, not {kind!r}")
        if kind == "flat" and ("A" not in bundle or "B" not in bundle):
            raise ScenarioError("flat bundles need holonomies A and B")
        if kind == "line" and "k" not in bundle:
            raise ScenarioError("line bundles need a degree k")
        sched = data.get("schedule") or {}
        tol = data.get("tolerances") or {}
        disks = atlas.get("disks", _DEFAULT_DISKS)
        for d in disks:
            if set(d) - {"center", "radius"}:
                raise ScenarioError(f"unknown disk keys {sorted(set(d) - {'center', 'radius'})}")
        sc = cls(
            name=str(data.get("name", "unnamed")),
            disks=[{"center": [float(c) for c in d["center"]], "radius": float(d["radius"])} for d in disks],
            order=None if atlas.get("order") is None else [int(i) for i in atlas["order"]],
            w=float(bump.get("w", 0.05)),
            theta_min=float(bump.get("theta_min", 0.2)),
            bundle=bundle,
            log_T=[float(v) for v in sched.get("log_T", [2, 3, 4, 5, 6, 7])],
            model=str(sched.get("model", "log")),
            abs_tol=float(tol.get("abs", 1e-11)),
            rel_tol=float(tol.get("rel", 1e-9)),
            match_floor=float(tol.get("match_floor", 1e-9)),
            seed=int(data.get("seed", 0)),
        )
        sc.raw = sc.to_dict()
        return sc

    def to_dict(self) -> dict:
        bundle = {"kind": self.bundle.get("kind", "trivial")}
        for key in ("A", "B"):
            if key in self.bundle:
                bundle[key] = [[float(v) for v in row] for row in self.bundle[key]]
        if "k" in self.bundle:
            bundle["k"] = int(self.bundle["k"])
        if "eps" in self.bundle and self.bundle["eps"] is not None:
            bundle["eps"] = float(self.bundle["eps"])
        atlas = {"disks": copy.deepcopy(self.disks)}
        if self.order is not None:
            atlas["order"] = list(self.order)
        return {
            "name": self.name,
            "atlas": atlas,
            "bump": {"w": self.w, "theta_min": self.theta_min},
            "bundle": bundle,
            "schedule": {"log_T": list(self.log_T), "model": self.model},
            "tolerances": {"abs": self.abs_tol, "rel": self.rel_tol, "match_floor": self.match_floor},
            "seed": self.seed,
        }

    @property
    def kind(self) -> str:
        return self.bundle.get("kind", "trivial")

    @property
    def schedule(self) -> TSchedule:
        return TSchedule(tuple(math.exp(v) for v in self.log_T), self.model)

    def atlas(self) -> Atlas:
        disks = [Disk(tuple(d["center"]), d["radius"]) for d in self.disks]
        return Atlas.from_disks(disks, self.order)

    def covering(self) -> TransversalCovering:
        return TransversalCovering(self.atlas(), self.w, self.theta_min)

    def flat_bundle(self, atlas: Atlas | None = None) -> FlatBundle:
        atlas = self.atlas() if atlas is None else atlas
        if self.kind == "trivial":
            return from_holonomy(np.eye(2), np.eye(2), atlas)
        if self.kind != "flat":
            raise ScenarioError("scenario does not describe a flat bundle")
        return from_holonomy(self.bundle["A"], self.bundle["B"], atlas)


def load_scenario(source) -> Scenario:
    """Scenario from a YAML path, YAML text, a mapping, or a built-in name."""
    if isinstance(source, Scenario):
        return source
    if isinstance(source, dict):
        return Scenario.from_dict(source)
    text = str(source)
    if text in BUILTIN_SCENARIOS:
        return builtin_scenario(text)
    if os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            text = fh.read()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"cannot parse scenario: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"no scenario file or built-in named {source!r}")
    return Scenario.from_dict(data)


def dump_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.to_dict(), sort_keys=False)


BUILTIN_SCENARIOS = {
    "default-trivial": {"name": "default-trivial", "bundle": {"kind": "trivial"}},
    "default-diag": {
        "name": "default-diag",
        "bundle": {"kind": "flat", "A": [[2.0, 0.0], [0.0, 0.5]], "B": [[1.0, 0.0], [0.0, 1.0]]},
    },
    "default-shear": {
        "name": "default-shear",
        "bundle": {"kind": "flat", "A": [[1.0, 1.0], [0.0, 1.0]], "B": [[1.0, 2.0], [0.0, 1.0]]},
    },
    "default-shear-2": {
        "name": "default-shear-2",
        "bundle": {"kind": "flat", "A": [[1.0, 1.0], [0.0, 1.0]], "B": [[1.0, 0.0], [0.0, 1.0]]},
    },
}
for _k in (-2, -1, 0, 1, 2):
    BUILTIN_SCENARIOS[f"line-{_k}"] = {"name": f"line-{_k}", "bundle": {"kind": "line", "k": _k}}


def builtin_scenario(name: str) -> Scenario:
    if name not in BUILTIN_SCENARIOS:
        raise ScenarioError(f"unknown built-in scenario {name!r}; choose from {sorted(BUILTIN_SCENARIOS)}")
    return Scenario.from_dict(copy.deepcopy(BUILTIN_SCENARIOS[name]))


# -- orchestration -------------------------------------------------------------


def worker_count(workers: int | None = None) -> int:
    """Explicit count, else the environment variable, else 1."""
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, int(workers))


def _pmap(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves input order, so reductions stay deterministic
        return list(pool.map(fn, *zip(*items)))


def _index_job(vertex, bundle, covering, schedule):
    return nu_extrapolated(vertex, bundle, covering, schedule).as_dict()


def _collar_job(vertex, bundle, covering, T, window, abs_tol, rel_tol):
    r = vertex_collar_integral(vertex, bundle, covering, T, window, abs_tol, rel_tol)
    return r.value, r.error


class _Complement:
    """``1 - sum`` of the ``V_p`` cutoffs (picklable)."""

    def __init__(self, cutoffs):
        self.cutoffs = list(cutoffs)

    def __call__(self, x):
        return 1.0 - sum(c(x) for c in self.cutoffs)


def _flat_report(sc: Scenario, workers: int, assembly: bool) -> dict:
    covering = sc.covering()
    bundle = sc.flat_bundle(covering.atlas)
    schedule = sc.schedule
    verts = vertices(covering, bundle)
    bplus = [v for v in verts if v.in_B_plus]
    euler = euler_total_flat(bundle, covering, 1.0, sc.abs_tol, sc.rel_tol)
    if bundle.is_trivial():
        # wedge of identical quadratic forms: every index vanishes identically
        rows = [nu_extrapolated(v, bundle, covering, schedule).as_dict() for v in bplus]
    else:
        rows = _pmap(_index_job, [(v, bundle, covering, schedule) for v in bplus], workers)
    nu_sum = tree_sum(r["nu"] for r in rows)
    nu_err = float(sum(r["error"] for r in rows))
    sf_sum = tree_sum(r["scale_free_value"] for r in rows)
    combined = nu_err + euler.error + sc.match_floor
    report = {
        "schema_version": SCHEMA_VERSION,
        "scenario": sc.to_dict(),
        "route": "flat",
        "euler": {"value": euler.value, "error": euler.error, "T": 1.0},
        "vertex_count": len(verts),
        "b_plus_count": len(bplus),
        "vertices": rows,
        "sum_nu": {"value": nu_sum, "error": nu_err, "scale_free": sf_sum},
        "match": bool(abs(nu_sum - euler.value) <= combined),
        "combined_error": combined,
    }
    if assembly:
        report["assembly"] = _assembly(sc, bundle, covering, verts, bplus, schedule.values[-1], workers)
    return report


def _assembly(sc, bundle, covering, verts, bplus, T, workers) -> dict:
    """Split the global integral at ``T`` into ``V_p`` pieces and the remainder."""
    cutoffs = [default_cutoff(v) for v in bplus]
    complement = _Complement(cutoffs)
    total = euler_total_flat(bundle, covering, T, sc.abs_tol, sc.rel_tol)
    jobs = []
    for v, c in zip(bplus, cutoffs):
        jobs.append((v, bundle, covering, T, c, sc.abs_tol, sc.rel_tol))
    for v in verts:
        jobs.append((v, bundle, covering, T, complement, sc.abs_tol, sc.rel_tol))
    if bundle.is_trivial():
        out = [(0.0, 0.0)] * len(jobs)
    else:
        out = _pmap(_collar_job, jobs, workers)
    pieces = [o[0] for o in out[: len(bplus)]]
    remainder = tree_sum(o[0] for o in out[len(bplus):])
    err = float(sum(o[1] for o in out)) + total.error
    assembled = tree_sum(pieces) + remainder
    return {
        "T": T,
        "euler_at_T": total.value,
        "pieces": pieces,
        "remainder": remainder,
        "assembled": assembled,
        "error": err,
        "consistent": bool(abs(assembled - total.value) <= err + sc.match_floor),
    }


def _line_report(sc: Scenario) -> dict:
    k = int(sc.bundle["k"])
    bundle = line_bundle(k, eps=sc.bundle.get("eps"))
    res = euler_total_general(bundle)
    oracle = curvature_integral(bundle)
    tol = 2e-2 * max(1, abs(k)) if k else 1e-6
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": sc.to_dict(),
        "route": "general",
        "euler": {"value": res.value, "error": res.error},
        "oracle": {"curvature_integral": oracle, "degree": k},
        "vertices": [],
        "match": bool(abs(res.value - oracle) <= tol and abs(oracle - k) <= 1e-8),
    }


def run_verify(scenario, workers: int | None = None, assembly: bool = True) -> dict:
    """Full comparison of the Euler integral against the sum of local indices."""
    sc = load_scenario(scenario)
    try:
        if sc.kind == "line":
            return _line_report(sc)
        return _flat_report(sc, worker_count(workers), assembly)
    except Exception as exc:
        raise type(exc)(f"scenario {sc.name!r}: {exc}") from exc


def _sf_job(vertex, bundle):
    return nu_scale_free(vertex, bundle, full=True)


def _perm_row(sc: Scenario, perm, method: str, workers: int) -> dict:
    covering = permute_ordering(sc.covering(), perm)
    covering = TransversalCovering(covering.atlas, covering.w, covering.theta_min)
    bundle = sc.flat_bundle(covering.atlas)
    bplus = [v for v in vertices(covering, bundle) if v.in_B_plus]
    if method == "scale_free":
        vals = _pmap(_sf_job, [(v, bundle) for v in bplus], workers)
        nus = [(float(a), float(e)) for a, e in vals]
    else:
        rows = _pmap(_index_job, [(v, bundle, covering, sc.schedule) for v in bplus], workers)
        nus = [(r["nu"], r["error"]) for r in rows]
    return {
        "permutation": list(perm),
        "b_plus": [[float(c) for c in v.p] for v in bplus],
        "nu": [a for a, _ in nus],
        "sum_nu": tree_sum(a for a, _ in nus),
        "error": float(sum(e for _, e in nus)),
    }


def run_ordering_study(scenario, permutations=None, method: str = "extrapolated", workers: int | None = None, tol: float = 5e-3) -> dict:
    """Local indices under re-ordering of the charts; the sum must not move."""
    sc = load_scenario(scenario)
    n = len(sc.disks)
    if permutations is None:
        permutations = [list(p) for p in _all_permutations(range(1, n + 1))]
    rows = [_perm_row(sc, p, method, worker_count(workers)) for p in permutations]
    sums = [r["sum_nu"] for r in rows]
    spread = float(max(sums) - min(sums)) if sums else 0.0
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": sc.to_dict(),
        "method": method,
        "rows": rows,
        "spread": spread,
        "match": bool(spread < tol),
    }


def run_diagnostics(scenario, workers: int | None = None) -> dict:
    """Convergence-rate and localization diagnostics on the scenario.

    For every ``B_+`` vertex with a nonvanishing index: ``gamma_T`` across
    the schedule and its log-log slope. For every other vertex: the
    windowed Euler integral across the schedule.
    """
    sc = load_scenario(scenario)
    covering = sc.covering()
    bundle = sc.flat_bundle(covering.atlas)
    schedule = sc.schedule
    verts = vertices(covering, bundle)
    bplus = [v for v in verts if v.in_B_plus]
    gammas = []
    for v in bplus:
        if nu_scale_free(v, bundle) == 0.0:
            continue
        g = [gamma_diagnostic(v, bundle, covering, T) for T in schedule.values]
        gammas.append({"p": [float(c) for c in v.p], "T": list(schedule.values), "gamma": g,
                       "slope": loglog_slope(schedule.values, g)})
    windows = []
    for v in verts:
        if v.in_B_plus:
            continue
        radius = 0.9 * min(v.W, nearest_b_plus_clearance(v.p, bplus))
        vals = decay_outside_Bplus(RadialCutoff(v.p, radius, 0.5 * radius), bundle, covering, schedule, verts)
        windows.append({"p": [float(c) for c in v.p], "beta": list(v.beta), "alpha": list(v.alpha),
                        "radius": radius, "values": vals})
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": sc.to_dict(),
        "gamma": gammas,
        "windows": windows,
    }


# -- reports -----------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def emit_report(report: dict, fmt: str = "json", table: str = "vertices") -> bytes:
    """Serialize a report.

    JSON carries everything. CSV emits one table: ``vertices`` (one row
    per ``B_+`` vertex), ``value_at_T`` (vertex x schedule entry) or
    ``permutations`` for ordering studies.
    """
    if fmt == "json":
        return (json.dumps(_plain(report), sort_keys=True, indent=2) + "\n").encode()
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    if table == "vertices":
        out.writerow(["px", "py", "beta", "alpha", "nu", "error", "scale_free", "agreement"])
        for r in report.get("vertices", []):
            v = r["vertex"]
            out.writerow([repr(v["p"][0]), repr(v["p"][1]), " ".join(map(str, v["beta"])),
                          " ".join(map(str, v["alpha"])), repr(r["nu"]), repr(r["error"]),
                          repr(r["scale_free_value"]), r["agreement"]])
    elif table == "value_at_T":
        out.writerow(["px", "py", "T", "value"])
        for r in report.get("vertices", []):
            for T, val in zip(r["T"], r["value_at_T"]):
                out.writerow([repr(r["vertex"]["p"][0]), repr(r["vertex"]["p"][1]), repr(T), repr(val)])
    elif table == "permutations":
        out.writerow(["permutation", "b_plus_count", "sum_nu", "error"])
        for r in report.get("rows", []):
            out.writerow([" ".join(map(str, r["permutation"])), len(r["b_plus"]), repr(r["sum_nu"]), repr(r["error"])])
    elif table == "gamma":
        out.writerow(["px", "py", "T", "gamma"])
        for r in report.get("gamma", []):
            for T, g in zip(r["T"], r["gamma"]):
                out.writerow([repr(r["p"][0]), repr(r["p"][1]), repr(T), repr(g)])
    else:
        raise ValueError(f"unknown CSV table {table!r}")
    return buf.getvalue().encode()


def parse_report(data: bytes) -> dict:
    report = json.loads(data.decode())
    if report.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {report.get('schema_version')!r}")
    return report


def nearest_b_plus_clearance(point, bplus) -> float:
    """Distance from ``point`` to the nearest ``V_p`` ball boundary."""
    return min(float(wrapped_distance(point, v.p)) - v.V for v in bplus) if bplus else float("inf")
