"""JSON scenarios: schema, name resolution, task execution, reports and CSV dumps."""

from __future__ import annotations

import copy
import csv
import json
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import FinslerCheckError, ScenarioError
from .first_integrals import (
    DEFAULT_STEP,
    FirstIntegralSeries,
    Trajectory,
    first_integral_drift,
    integrate_geodesics,
    nabla_H_residual,
    scalar_names,
)
from .geometry import SampleConfig, Spray, sample_points, validate_spray
from .metrics import FinslerMetric, geodesic_spray
from .metrizability import (
    FAIL_TOL,
    PASS_TOL,
    angular_invariance_residual,
    fm_residual,
    hamel_report,
    make_gyroscopic_spray,
    make_projective_deformation,
    pm_levicivita_residual,
    recover_gyroscopic_form,
)

SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1

_expr = {"type": ["string", "number"]}
_name = {"type": "string", "minLength": 1}
_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "finslercheck scenario",
    "type": "object",
    "required": ["dimension", "tasks"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "dimension": {"type": "integer", "minimum": 1, "maximum": 6},
        "metrics": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["family"],
                "properties": {
                    "family": {"enum": ["euclidean", "riemannian", "randers", "conformal", "custom"]},
                    "a": {"type": "array", "items": {"type": "array", "items": _expr}},
                    "b": {"type": "array", "items": _expr},
                    "phi": _expr,
                    "F": _expr,
                },
                "additionalProperties": False,
                "allOf": [
                    {"if": {"properties": {"family": {"const": "riemannian"}}}, "then": {"required": ["a"]}},
                    {"if": {"properties": {"family": {"const": "randers"}}}, "then": {"required": ["b"]}},
                    {"if": {"properties": {"family": {"const": "conformal"}}}, "then": {"required": ["phi"]}},
                    {"if": {"properties": {"family": {"const": "custom"}}}, "then": {"required": ["F"]}},
                ],
            },
        },
        "sprays": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["type"],
                "properties": {
                    "type": {"enum": ["geodesic", "flat", "expressions", "projective", "gyroscopic"]},
                    "metric": _name,
                    "spray": _name,
                    "G": {"type": "array", "items": _expr},
                    "P": _expr,
                    "omega": {"type": "array", "items": {"type": "array", "items": _expr}},
                },
                "additionalProperties": False,
                "allOf": [
                    {"if": {"properties": {"type": {"const": "geodesic"}}}, "then": {"required": ["metric"]}},
                    {"if": {"properties": {"type": {"const": "expressions"}}}, "then": {"required": ["G"]}},
                    {"if": {"properties": {"type": {"const": "projective"}}}, "then": {"required": ["spray", "P"]}},
                    {"if": {"properties": {"type": {"const": "gyroscopic"}}},
                     "then": {"required": ["metric", "omega"]}},
                ],
            },
        },
        "samples": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seed": {"type": "integer", "minimum": 0},
                "count": {"type": "integer", "minimum": 1},
                "box": {"type": "array", "items": _pair},
                "shell": _pair,
                "y_min": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "pass": {"type": "number", "exclusiveMinimum": 0},
                "fail": {"type": "number", "exclusiveMinimum": 0},
                "spray": {"type": "number", "exclusiveMinimum": 0},
                "drift": {"type": "number", "exclusiveMinimum": 0},
                "energy": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "tasks": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["task"],
                "additionalProperties": False,
                "properties": {
                    "task": {"enum": ["validate", "check-fm", "check-pm", "check-gm", "hamel",
                                      "first-integrals", "geodesics"]},
                    "name": _name,
                    "spray": _name,
                    "metric": _name,
                    "reference": _name,
                    "trajectories": {"type": "integer", "minimum": 1},
                    "t_end": {"type": "number", "exclusiveMinimum": 0},
                    "step": {"type": "number", "exclusiveMinimum": 0},
                    "fiber_count": {"type": "integer", "minimum": 3},
                    "csv": {"type": "boolean"},
                },
                "allOf": [
                    {"if": {"properties": {"task": {"const": "validate"}}}, "then": {"required": ["spray"]}},
                    {"if": {"properties": {"task": {"enum": ["check-fm", "check-pm", "check-gm", "hamel",
                                                             "geodesics"]}}},
                     "then": {"required": ["spray", "metric"]}},
                    {"if": {"properties": {"task": {"const": "first-integrals"}}},
                     "then": {"required": ["spray", "metric", "reference"]}},
                ],
            },
        },
    },
}

DEFAULT_TOLERANCES = {"pass": PASS_TOL, "fail": FAIL_TOL, "spray": 1e-8, "drift": 1e-5, "energy": 1e-6}


def _json_path(parts) -> str:
    return "/" + "/".join(str(p) for p in parts)


def validate_scenario(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ScenarioError(err.message, _json_path(err.absolute_path))


@dataclass
class Scenario:
    doc: dict
    dimension: int
    metrics: dict
    sprays: dict
    samples: SampleConfig
    tolerances: dict
    tasks: list
    name: str = "scenario"

    def echo(self) -> dict:
        """The scenario with defaults filled in."""
        out = copy.deepcopy(self.doc)
        out.setdefault("schema_version", SCHEMA_VERSION)
        out["samples"] = {"seed": self.samples.seed, "count": self.samples.count,
                          "box": [list(b) for b in self.samples.box], "shell": list(self.samples.shell),
                          "y_min": self.samples.y_min}
        out["tolerances"] = dict(self.tolerances)
        out["tasks"] = [dict(t) for t in self.tasks]
        return out


def _build_metric(name: str, spec: dict, n: int) -> FinslerMetric:
    try:
        return FinslerMetric.from_spec(spec, n, name)
    except (FinslerCheckError, ValueError) as exc:
        raise ScenarioError(str(exc), f"/metrics/{name}") from exc


def _build_spray(name: str, specs: dict, metrics: dict, built: dict, n: int, stack=()) -> Spray:
    if name in built:
        return built[name]
    path = f"/sprays/{name}"
    if name in stack:
        raise ScenarioError(f"spray {name!r} refers to itself", path)
    spec = specs[name]
    kind = spec["type"]

    def metric(key="metric"):
        ref = spec[key]
        if ref not in metrics:
            raise ScenarioError(f"unknown metric {ref!r}", f"{path}/{key}")
        return metrics[ref]

    try:
        if kind == "geodesic":
            S = geodesic_spray(metric())
        elif kind == "flat":
            S = Spray.flat(n)
        elif kind == "expressions":
            if len(spec["G"]) != n:
                raise ScenarioError(f"need {n} coefficients, got {len(spec['G'])}", f"{path}/G")
            S = Spray.from_expressions([str(g) for g in spec["G"]], n, name=name)
        elif kind == "projective":
            base = spec["spray"]
            if base not in specs:
                raise ScenarioError(f"unknown spray {base!r}", f"{path}/spray")
            St = _build_spray(base, specs, metrics, built, n, stack + (name,))
            S = make_projective_deformation(St, str(spec["P"]), name=name)
        else:
            omega = [[str(v) for v in row] for row in spec["omega"]]
            S = make_gyroscopic_spray(metric(), omega, name=name)
    except ScenarioError:
        raise
    except (FinslerCheckError, ValueError) as exc:
        raise ScenarioError(str(exc), path) from exc
    S.name = name
    built[name] = S
    return S


def load_scenario(source, seed: int | None = None) -> Scenario:
    """Parse, validate and resolve a scenario from a path or an already-loaded dict."""
    if isinstance(source, dict):
        doc = copy.deepcopy(source)
    else:
        try:
            doc = json.loads(Path(source).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid JSON: {exc}") from exc
    validate_scenario(doc)
    n = doc["dimension"]

    metrics = {k: _build_metric(k, v, n) for k, v in doc.get("metrics", {}).items()}
    specs = doc.get("sprays", {})
    sprays: dict = {}
    for k in specs:
        _build_spray(k, specs, metrics, sprays, n)

    s = doc.get("samples", {})
    box = s.get("box", [[-1.0, 1.0]] * n)
    if len(box) != n:
        raise ScenarioError(f"box needs {n} intervals, got {len(box)}", "/samples/box")
    config = SampleConfig(seed=s.get("seed", 0) if seed is None else seed, count=s.get("count", 200),
                          box=tuple(tuple(b) for b in box), shell=tuple(s.get("shell", (0.5, 2.0))),
                          y_min=s.get("y_min", 0.5))
    tolerances = {**DEFAULT_TOLERANCES, **doc.get("tolerances", {})}

    tasks = []
    seen = set()
    for i, t in enumerate(doc["tasks"]):
        t = dict(t)
        t.setdefault("name", f"{i}-{t['task']}")
        if t["name"] in seen:
            raise ScenarioError(f"duplicate task name {t['name']!r}", f"/tasks/{i}/name")
        seen.add(t["name"])
        if "spray" in t and t["spray"] not in sprays:
            raise ScenarioError(f"unknown spray {t['spray']!r}", f"/tasks/{i}/spray")
        for key in ("metric", "reference"):
            if key in t and t[key] not in metrics:
                raise ScenarioError(f"unknown metric {t[key]!r}", f"/tasks/{i}/{key}")
        tasks.append(t)
    return Scenario(doc, n, metrics, sprays, config, tolerances, tasks, doc.get("name", "scenario"))


# -- CSV trajectories ---------------------------------------------------------

def csv_columns(n: int) -> list:
    return (["t"] + [f"x{i}" for i in range(1, n + 1)] + [f"y{i}" for i in range(1, n + 1)]
            + scalar_names(n))


def export_trajectory(traj: Trajectory, series: FirstIntegralSeries, path) -> Path:
    """Write ``traj`` and its scalar series as CSV with 17 significant digits."""
    n = traj.dimension
    if len(series) != len(traj):
        raise ValueError(f"series has {len(series)} states, trajectory has {len(traj)}")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_columns(n))
        for k in range(len(traj)):
            row = [traj.t[k], *traj.x[k], *traj.y[k], *(series.values[c][k] for c in series.names)]
            w.writerow([f"{float(v):.17g}" for v in row])
    return path


def read_trajectory(path, dimension: int | None = None):
    """Inverse of :func:`export_trajectory`: returns ``(Trajectory, FirstIntegralSeries)``."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = dimension or sum(1 for c in header if c.startswith("x"))
    if header != csv_columns(n):
        raise ValueError(f"unexpected CSV header {header}")
    data = np.array(body, float).reshape(len(body), len(header))
    traj = Trajectory(data[:, 0], data[:, 1:1 + n], data[:, 1 + n:1 + 2 * n])
    names = scalar_names(n)
    values = {c: data[:, 1 + 2 * n + k] for k, c in enumerate(names)}
    return traj, FirstIntegralSeries(names, values, np.zeros(len(body), bool))


# -- task execution -------------------------------------------------------------

@dataclass
class TaskResult:
    name: str
    task: str
    status: str
    result: dict
    files: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"name": self.name, "task": self.task, "status": self.status,
                "result": self.result, "files": self.files}


def _status(max_residual: float, tol: float, fail_tol: float) -> str:
    if max_residual <= tol:
        return "pass"
    return "fail" if max_residual > fail_tol else "inconclusive"


def _worst(*statuses) -> str:
    for s in ("fail", "inconclusive"):
        if s in statuses:
            return s
    return "pass"


def _starts(sc: Scenario, count: int):
    cfg = SampleConfig(seed=sc.samples.seed + 101, count=count, box=sc.samples.box,
                       shell=sc.samples.shell, y_min=sc.samples.y_min)
    return list(sample_points(cfg))


def _run_task(sc: Scenario, t: dict, samples, out_dir: Path | None, jobs: int) -> TaskResult:
    tol, fail = sc.tolerances["pass"], sc.tolerances["fail"]
    kind = t["task"]
    S = sc.sprays.get(t.get("spray"))
    F = sc.metrics.get(t.get("metric"))
    files: list = []

    if kind == "validate":
        rep = validate_spray(S, samples, sc.tolerances["spray"], jobs)
        status = "pass" if rep.passed else _status(rep.max_residual, sc.tolerances["spray"], fail)
        return TaskResult(t["name"], kind, status, rep.to_dict())
    if kind == "check-fm":
        v = fm_residual(S, F, samples, tol, fail, jobs)
        return TaskResult(t["name"], kind, v.status, v.to_dict())
    if kind == "check-pm":
        v = pm_levicivita_residual(S, F, samples, tol, fail, jobs)
        a = angular_invariance_residual(S, F, samples, tol, fail, jobs)
        return TaskResult(t["name"], kind, v.status,
                          {"levi_civita": v.to_dict(), "angular_invariance": a.to_dict()})
    if kind == "check-gm":
        a = angular_invariance_residual(S, F, samples, tol, fail, jobs)
        g = recover_gyroscopic_form(S, F, samples, tol, fail, t.get("fiber_count", 4), jobs)
        return TaskResult(t["name"], kind, _worst(a.status, g.status),
                          {"angular_invariance": a.to_dict(), "gyroscopic_form": g.to_dict()})
    if kind == "hamel":
        v = hamel_report(S, F, samples, tol, fail, jobs)
        return TaskResult(t["name"], kind, v.status, v.to_dict())

    count = t.get("trajectories", 10)
    t_end = t.get("t_end", 1.0)
    step = t.get("step", DEFAULT_STEP)
    trajs = integrate_geodesics(S, _starts(sc, count), t_end, step, sc.samples.y_min)
    Ft = sc.metrics[t["reference"]] if kind == "first-integrals" else F
    series = [first_integral_drift(S, F, Ft, tr, check_hypotheses=False) for tr in trajs]
    if t.get("csv", True) and out_dir is not None:
        for k, (tr, se) in enumerate(zip(trajs, series)):
            p = export_trajectory(tr, se, out_dir / f"{t['name']}_traj{k}.csv")
            files.append(p.name)
    per_traj = [{"start": {"x": list(tr.x[0]), "y": list(tr.y[0])}, **tr.metadata(), **se.to_dict()}
                for tr, se in zip(trajs, series)]
    energy = max(se.drift["F2"] for se in series)
    truncated = any(tr.truncated for tr in trajs)
    result = {"trajectories": per_traj, "energy_drift_max": energy, "any_truncated": truncated}
    if kind == "geodesics":
        status = "fail" if truncated else _status(energy, sc.tolerances["energy"], fail)
        return TaskResult(t["name"], kind, status, result, files)
    drift = max(se.invariant_drift for se in series)
    nh = nabla_H_residual(S, F, Ft, samples, tol, jobs)
    result.update({"invariant_drift_max": drift, "nabla_H": nh.to_dict()})
    status = _worst(_status(nh.max_residual, tol, fail), _status(drift, sc.tolerances["drift"], fail),
                    "fail" if truncated else "pass")
    return TaskResult(t["name"], kind, status, result, files)


@dataclass
class Report:
    data: dict
    exit_code: int

    def dumps(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True, allow_nan=True)


def run_scenario(source, out_dir=None, seed: int | None = None, jobs: int = 1) -> Report:
    """Execute every task in order; errors become exit code 1 with the offending task named."""
    sc = load_scenario(source, seed)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    samples = sample_points(sc.samples)
    results, timing = [], {}
    for i, t in enumerate(sc.tasks):
        start = time.perf_counter()
        try:
            res = _run_task(sc, t, samples, out, jobs)
        except FinslerCheckError as exc:
            raise ScenarioError(f"task {t['name']!r} failed: {exc}", f"/tasks/{i}") from exc
        timing[t["name"]] = time.perf_counter() - start
        results.append(res.to_dict())
    statuses = [r["status"] for r in results]
    data = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool": {"name": "finslercheck", "version": __version__},
        "scenario": sc.echo(),
        "tasks": results,
        "summary": {"status": _worst(*statuses), "counts": {s: statuses.count(s) for s in sorted(set(statuses))}},
        "timing": {"timestamp": datetime.now(timezone.utc).isoformat(), "seconds": timing},
    }
    report = Report(_clean(data), 0 if all(s == "pass" for s in statuses) else 2)
    if out is not None:
        (out / "report.json").write_text(report.dumps() + "\n", encoding="utf-8")
    return report


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def strip_timing(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != "timing"}
