import csv
import io
import json
import math

import numpy as np
import pytest
import yaml

from mqeuler import cli
from mqeuler.harness import (
    BUILTIN_SCENARIOS,
    SCHEMA_VERSION,
    ScenarioError,
    dump_scenario,
    emit_report,
    load_scenario,
    nearest_b_plus_clearance,
    parse_report,
    run_ordering_study,
    run_verify,
    worker_count,
)

SHEAR_YAML = """\
name: yaml-shear
atlas:
  disks:
    - {center: [0.0, 0.0], radius: 0.4}
    - {center: [0.5, 0.0], radius: 0.4}
    - {center: [0.0, 0.5], radius: 0.4}
    - {center: [0.5, 0.5], radius: 0.4}
bump: {w: 0.05}
bundle: {kind: flat, A: [[1, 1], [0, 1]], B: [[1, 2], [0, 1]]}
schedule: {log_T: [2, 3, 4, 5, 6, 7], model: log}
"""


@pytest.fixture(scope="module")
def trivial_report():
    return run_verify("default-trivial")


def test_yaml_round_trip(tmp_path):
    sc = load_scenario(SHEAR_YAML)
    assert sc.kind == "flat" and sc.name == "yaml-shear"
    again = load_scenario(dump_scenario(sc))
    assert again.to_dict() == sc.to_dict()
    path = tmp_path / "s.yaml"
    path.write_text(dump_scenario(sc))
    assert load_scenario(str(path)).to_dict() == sc.to_dict()
    assert load_scenario(sc.to_dict()).to_dict() == sc.to_dict()


def test_schedule_from_scenario():
    sc = load_scenario(SHEAR_YAML)
    assert sc.schedule.values == pytest.approx(tuple(math.exp(k) for k in range(2, 8)))


@pytest.mark.parametrize(
    "bad",
    [
        {"name": "x", "colour": 1},
        {"bump": {"w": 0.05, "width": 1}},
        {"atlas": {"disks": [{"center": [0, 0], "radius": 0.4, "r": 1}]}},
        {"bundle": {"kind": "flat", "A": [[1, 0], [0, 1]]}},
        {"bundle": {"kind": "projective"}},
        {"bundle": {"kind": "line"}},
        {"tolerances": {"abs": 1e-9, "tight": True}},
    ],
)
def test_unknown_or_missing_keys_rejected(bad):
    with pytest.raises(ScenarioError):
        load_scenario(bad)


def test_unparseable_inputs():
    with pytest.raises(ScenarioError):
        load_scenario("no-such-scenario-or-file")
    with pytest.raises(ScenarioError):
        load_scenario("a: [1, 2")


def test_builtins_load():
    for name in BUILTIN_SCENARIOS:
        assert load_scenario(name).name == name
    assert load_scenario("default-diag").flat_bundle().holonomy((1, 0)) == pytest.approx(np.diag([2.0, 0.5]))
    with pytest.raises(ScenarioError):
        load_scenario("line-1").flat_bundle()


def test_worker_count(monkeypatch):
    monkeypatch.delenv("MQEULER_WORKERS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("MQEULER_WORKERS", "3")
    assert worker_count() == 3
    assert worker_count(2) == 2
    assert worker_count(0) == 1


def test_trivial_report(trivial_report):
    r = trivial_report
    assert r["schema_version"] == SCHEMA_VERSION and r["route"] == "flat"
    assert r["vertex_count"] == 32 and r["b_plus_count"] == 8
    assert r["euler"]["value"] == 0.0 and r["sum_nu"]["value"] == 0.0
    assert all(v["nu"] == 0.0 for v in r["vertices"])
    assert r["match"] and r["assembly"]["consistent"]


def test_reports_are_deterministic(trivial_report):
    again = run_verify("default-trivial")
    for fmt, table in [("json", "vertices"), ("csv", "vertices"), ("csv", "value_at_T")]:
        assert emit_report(trivial_report, fmt, table) == emit_report(again, fmt, table)


def test_csv_tables(trivial_report):
    rows = list(csv.reader(io.StringIO(emit_report(trivial_report, "csv", "vertices").decode())))
    assert rows[0][:2] == ["px", "py"] and len(rows) == 1 + 8
    rows = list(csv.reader(io.StringIO(emit_report(trivial_report, "csv", "value_at_T").decode())))
    assert len(rows) == 1 + 8 * 6
    with pytest.raises(ValueError):
        emit_report(trivial_report, "csv", "nonsense")
    with pytest.raises(ValueError):
        emit_report(trivial_report, "xml")


def test_json_parse(trivial_report):
    back = parse_report(emit_report(trivial_report))
    assert back["b_plus_count"] == 8
    bad = json.dumps({"schema_version": 99}).encode()
    with pytest.raises(ValueError):
        parse_report(bad)


def test_line_report():
    r = run_verify("line-1")
    assert r["route"] == "general" and r["match"]
    assert r["euler"]["value"] == pytest.approx(1.0, abs=2e-2)
    assert r["oracle"]["curvature_integral"] == pytest.approx(1.0, abs=1e-10)


def test_ordering_study_scale_free_subset():
    res = run_ordering_study("default-shear", permutations=[[1, 2, 3, 4], [4, 3, 2, 1], [2, 4, 1, 3]], method="scale_free")
    assert len(res["rows"]) == 3 and res["match"]
    sets = {tuple(map(tuple, r["b_plus"])) for r in res["rows"]}
    assert len(sets) > 1
    rows = list(csv.reader(io.StringIO(emit_report(res, "csv", "permutations").decode())))
    assert len(rows) == 4


def test_nearest_clearance():
    class V:
        p = np.array([0.5, 0.5])
        V = 0.1

    assert nearest_b_plus_clearance(np.array([0.5, 0.8]), [V]) == pytest.approx(0.2)
    assert nearest_b_plus_clearance(np.zeros(2), []) == float("inf")


def test_cli_exit_codes(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert cli.main(["verify", "default-trivial", "-o", str(out)]) == 0
    assert parse_report(out.read_bytes())["match"]
    assert cli.main(["indices", "default-trivial", "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("px,py")
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"name": "x", "frobnicate": 1}))
    assert cli.main(["verify", str(bad)]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert cli.main(["line-bundle", "--k", "0", "-o", str(out)]) == 0
    assert parse_report(out.read_bytes())["euler"]["value"] == pytest.approx(0.0, abs=1e-12)


def test_cli_mismatch_exit_code(monkeypatch, tmp_path):
    import mqeuler.cli as mod

    monkeypatch.setattr(mod, "run_verify", lambda sc, workers=None, assembly=True: {"match": False, "vertices": []})
    assert mod.main(["verify", "default-trivial", "-o", str(tmp_path / "x.json")]) == 1


def test_cli_seed_override(tmp_path):
    out = tmp_path / "r.json"
    assert cli.main(["verify", "default-trivial", "--seed", "5", "-o", str(out)]) == 0
    assert parse_report(out.read_bytes())["scenario"]["seed"] == 5


@pytest.mark.slow
def test_flat_report_parallel_matches_serial():
    a = run_verify("default-shear", workers=1, assembly=False)
    b = run_verify("default-shear", workers=2, assembly=False)
    assert emit_report(a) == emit_report(b)
