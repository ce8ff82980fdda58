import copy
import json
from pathlib import Path

import numpy as np
import pytest

from finslercheck import cli
from finslercheck.connection import injected_connection_sign_error
from finslercheck.errors import ScenarioError
from finslercheck.first_integrals import FirstIntegralSeries, Trajectory, integrate_geodesic, first_integral_drift
from finslercheck.geometry import FiberPoint, Spray
from finslercheck.metrics import FinslerMetric
from finslercheck.scenario import (
    csv_columns,
    export_trajectory,
    load_scenario,
    read_trajectory,
    run_scenario,
    strip_timing,
)
from finslercheck.selftest import selftest

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

SMALL = {
    "schema_version": 1,
    "dimension": 2,
    "metrics": {"E": {"family": "euclidean"}, "R": {"family": "randers", "a": [[1, 0], [0, 1]], "b": [0.5, 0]}},
    "sprays": {"flat": {"type": "flat"}},
    "samples": {"seed": 4, "count": 30},
    "tasks": [
        {"task": "check-fm", "spray": "flat", "metric": "E"},
        {"task": "first-integrals", "spray": "flat", "metric": "E", "reference": "R",
         "trajectories": 2, "step": 0.05, "name": "fi"},
    ],
}


@pytest.mark.parametrize("name, code", [("euclidean_fm_pass", 0), ("perturbed_fm_fail", 2),
                                        ("unresolved_metric", 1)])
def test_canned_scenarios_exit_codes(name, code, tmp_path, capsys):
    assert cli.main(["run", str(SCENARIOS / f"{name}.json"), "--out", str(tmp_path)]) == code
    if code == 1:
        err = capsys.readouterr().err
        assert "error:" in err and "/tasks/0/metric" in err and "Missing" in err
        assert not (tmp_path / "report.json").exists()
    else:
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["summary"]["status"] == ("pass" if code == 0 else "fail")


def test_stdout_carries_json_without_out(capsys):
    assert cli.main(["run", str(SCENARIOS / "euclidean_fm_pass.json")]) == 0
    captured = capsys.readouterr()
    assert json.loads(captured.out)["summary"]["status"] == "pass"
    assert "overall: pass" in captured.err


def test_schema_violation_names_json_path():
    doc = copy.deepcopy(SMALL)
    doc["samples"]["count"] = "many"
    with pytest.raises(ScenarioError, match="/samples/count"):
        load_scenario(doc)
    doc = copy.deepcopy(SMALL)
    doc["tasks"][0]["task"] = "prove-everything"
    with pytest.raises(ScenarioError, match="/tasks/0"):
        load_scenario(doc)


def test_unknown_spray_reference():
    doc = copy.deepcopy(SMALL)
    doc["sprays"]["bad"] = {"type": "geodesic", "metric": "Nope"}
    with pytest.raises(ScenarioError, match="Nope"):
        load_scenario(doc)


def test_missing_file_is_cli_error(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "absent.json")]) == 1
    assert "error:" in capsys.readouterr().err


def test_reports_are_deterministic(tmp_path):
    a = run_scenario(SMALL, tmp_path / "a")
    b = run_scenario(SMALL, tmp_path / "b")
    assert json.dumps(strip_timing(a.data), sort_keys=True) == json.dumps(strip_timing(b.data), sort_keys=True)
    for f in a.data["tasks"][1]["files"]:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert "timing" in a.data


def test_seed_override_changes_samples():
    start = lambda r: r.data["tasks"][1]["result"]["trajectories"][0]["start"]  # noqa: E731
    base, other = run_scenario(SMALL), run_scenario(SMALL, seed=99)
    assert start(base) != start(other)
    assert start(other) == start(run_scenario({**SMALL, "samples": {"seed": 99, "count": 30}}))
    assert other.exit_code == 0


def test_csv_round_trip_reproduces_drift(tmp_path):
    report = run_scenario(SMALL, tmp_path)
    task = report.data["tasks"][1]
    assert task["files"] == ["fi_traj0.csv", "fi_traj1.csv"]
    for k, f in enumerate(task["files"]):
        traj, series = read_trajectory(tmp_path / f)
        assert traj.t[0] == 0.0
        assert series.drift == task["result"]["trajectories"][k]["drift"]


def test_csv_export_of_conformal_trajectory(tmp_path):
    F = FinslerMetric.conformal("0.5*x1 + 0.2*x2^2", 2)
    from finslercheck import geodesic_spray
    S = geodesic_spray(F)
    tr = integrate_geodesic(S, FiberPoint((0.1, 0.2), (0.8, -0.6)), h=0.05)
    se = first_integral_drift(S, F, F, tr)
    p = export_trajectory(tr, se, tmp_path / "c.csv")
    tr2, se2 = read_trajectory(p)
    np.testing.assert_array_equal(tr2.x, tr.x)
    np.testing.assert_array_equal(tr2.y, tr.y)
    assert se2.drift == se.drift
    assert p.read_text().splitlines()[0] == ",".join(csv_columns(2))


def test_empty_trajectory_exports_header_only(tmp_path):
    n = 2
    tr = Trajectory(np.zeros(0), np.zeros((0, n)), np.zeros((0, n)))
    se = first_integral_drift(Spray.flat(n), FinslerMetric.euclidean(n), FinslerMetric.euclidean(n), tr)
    p = export_trajectory(tr, se, tmp_path / "empty.csv")
    assert p.read_text() == ",".join(csv_columns(n)) + "\n"
    tr2, se2 = read_trajectory(p)
    assert len(tr2) == 0 and isinstance(se2, FirstIntegralSeries)


def test_export_rejects_mismatched_series(tmp_path):
    tr = integrate_geodesic(Spray.flat(2), FiberPoint((0, 0), (1, 0)), h=0.5)
    se = first_integral_drift(Spray.flat(2), FinslerMetric.euclidean(2), FinslerMetric.euclidean(2),
                              integrate_geodesic(Spray.flat(2), FiberPoint((0, 0), (1, 0)), h=0.25))
    with pytest.raises(ValueError):
        export_trajectory(tr, se, tmp_path / "x.csv")


def test_jobs_do_not_change_results():
    a = run_scenario(SMALL, jobs=1)
    b = run_scenario(SMALL, jobs=3)
    assert strip_timing(a.data)["tasks"] == strip_timing(b.data)["tasks"]


def test_selftest_is_deterministic_and_green():
    a, b = selftest(), selftest()
    assert a["summary"]["passed"] and a["summary"]["failed"] == 0
    assert json.dumps(strip_timing(a), sort_keys=True) == json.dumps(strip_timing(b), sort_keys=True)


def test_sign_mutation_breaks_fm_fixtures():
    with injected_connection_sign_error():
        report = selftest()
    failed = {r["group"] for r in report["checks"] if not r["ok"]}
    assert not report["summary"]["passed"]
    assert "fm" in failed


def test_selftest_cli_writes_json(tmp_path, capsys):
    path = tmp_path / "st.json"
    assert cli.main(["selftest", "--json", str(path)]) == 0
    assert json.loads(path.read_text())["summary"]["passed"]
    assert "all fixtures pass" in capsys.readouterr().out
