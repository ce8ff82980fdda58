"""Built-in fixture matrix run by ``finslercheck selftest``.

Each row evaluates one quantity, compares it to a threshold and records
whether the outcome matches the expectation (``pass`` rows must be below the
threshold, ``fail`` rows are detectors that must exceed it).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import FinslerCheckError
from .expr import ad_fd_discrepancy, as_field
from .first_integrals import (
    endpoint_convergence,
    first_integral_drift,
    first_integral_values,
    integrate_geodesics,
    nabla_H_residual,
)
from .geometry import SampleConfig, Spray, homogeneity_residuals, sample_points, validate_spray
from .metrics import (
    FinslerMetric,
    angular_jet,
    fiber_gradient,
    geodesic_spray,
    metric_jet,
    numerical_rank,
)
from .metrizability import (
    angular_invariance_residual,
    fm_residual,
    split_reconstruction_residual,
    make_gyroscopic_spray,
    make_projective_deformation,
    pm_levicivita_residual,
    recover_gyroscopic_form,
)

SAMPLE_COUNT = 200
TRAJECTORIES = 10
PROJECTIVE_FACTORS = ("0", "sqrt(y1^2 + y2^2)", "0.2*y1 - 0.1*y2")


@dataclass
class Check:
    group: str
    name: str
    value: float
    threshold: float
    expect: str = "pass"
    at_least: bool = False

    @property
    def observed(self) -> str:
        within = self.value >= self.threshold if self.at_least else self.value <= self.threshold
        return "pass" if within else "fail"

    @property
    def ok(self) -> bool:
        return self.observed == self.expect

    def to_dict(self) -> dict:
        return {"group": self.group, "name": self.name, "value": float(self.value),
                "threshold": self.threshold, "at_least": self.at_least, "expect": self.expect, "observed": self.observed,
                "ok": self.ok}


def fixture_metrics() -> dict:
    return {
        "euclidean-2": FinslerMetric.euclidean(2, "euclidean-2"),
        "randers-2": FinslerMetric.randers([[1.0, 0.0], [0.0, 1.0]], [0.5, 0.0], "randers-2"),
        "conformal-2": FinslerMetric.conformal("0.5*x1 + 0.2*x2^2", 2, "conformal-2"),
        "riemannian-2": FinslerMetric.riemannian([["1 + 0.5*x1^2", "0.2*x2"], ["0.2*x2", "2"]], "riemannian-2"),
        "euclidean-3": FinslerMetric.euclidean(3, "euclidean-3"),
        "randers-3": FinslerMetric.randers(np.eye(3).tolist(), [0.3, -0.2, 0.1], "randers-3"),
        "conformal-3": FinslerMetric.conformal("0.3*x1 - 0.2*x2*x3", 3, "conformal-3"),
    }


def samples_for(n: int, seed: int = 0, count: int = SAMPLE_COUNT):
    return sample_points(SampleConfig.cube(n, count=count, seed=seed))


def perturbed_flat_spray() -> Spray:
    return Spray.from_expressions(["0.1*y1^2", "0"], 2, name="flat + 0.1 y1^2")


def euler_chain(F: FinslerMetric, x, y) -> dict:
    """Residuals of the Euler identities for ``F`` at a batch of points."""
    n = F.dim
    e1 = np.abs(homogeneity_residuals(F.F, 1, x, y)).max()
    e2 = np.abs(homogeneity_residuals(F.F2, 2, x, y)).max()
    g = metric_jet(F, x, y, 0).value
    gy = np.einsum("...ij,...j->...i", g, y)
    dF2 = fiber_gradient(F.F2.jet(x, y, 1), n).value
    F2 = F.F2.values(x, y)
    scale = 1.0 + np.abs(F2)
    e3 = (np.abs(dF2 - 2 * gy).max(axis=-1) / scale).max()
    e4 = (np.abs(F2 - np.einsum("...i,...i->...", gy, y)) / scale).max()
    h = angular_jet(F, x, y, 0).value
    e5 = np.abs(np.einsum("...ij,...j->...i", h, y)).max()
    rg, _ = numerical_rank(g)
    rh, _ = numerical_rank(h)
    bad_rank = int(np.sum(rg != n) + np.sum(rh != n - 1))
    return {"euler_F": float(e1), "euler_F2": float(e2), "gradient_F2": float(e3),
            "quadratic_F2": float(e4), "angular_y": float(e5), "rank_violations": bad_rank}


def build_checks() -> list:
    checks: list = []
    add = checks.append
    metrics = fixture_metrics()
    s2, s3 = samples_for(2), samples_for(3)
    pick = {2: s2, 3: s3}

    # derivatives and homogeneity
    ad_pts = {n: samples_for(n, seed=11, count=100) for n in (2, 3)}
    for key, F in metrics.items():
        s = ad_pts[F.dim]
        add(Check("ad", f"{key} F", ad_fd_discrepancy(F.F, s.x, s.y), 1e-6))
        add(Check("ad", f"{key} F2", ad_fd_discrepancy(F.F2, s.x, s.y), 1e-6))
        chain = euler_chain(F, pick[F.dim].x, pick[F.dim].y)
        rank = chain.pop("rank_violations")
        add(Check("homogeneity", f"{key} euler chain", max(chain.values()), 1e-9))
        add(Check("homogeneity", f"{key} rank violations", rank, 0))

    # sprays
    for key, F in metrics.items():
        add(Check("spray", f"geodesic({key}) 2-homogeneity",
                  validate_spray(geodesic_spray(F), pick[F.dim]).max_residual, 1e-8))
    add(Check("spray", "G1 = y1 detected", validate_spray(Spray.from_expressions(["y1", "0"], 2), s2).max_residual,
              1e-8, "fail"))

    # Finsler metrizability
    for key in ("euclidean-2", "randers-2", "conformal-2", "euclidean-3", "randers-3", "conformal-3"):
        F = metrics[key]
        v = fm_residual(geodesic_spray(F), F, pick[F.dim])
        add(Check("fm", f"{key} nabla g", v.max_residual, 1e-7))
        add(Check("fm", f"{key} delta_S F2", v.checks["euler_lagrange_max"], 1e-7))
    v = fm_residual(perturbed_flat_spray(), metrics["euclidean-2"], s2)
    add(Check("fm", "perturbed flat nabla g", v.max_residual, 1e-3, "fail"))
    add(Check("fm", "perturbed flat delta_S F2", v.checks["euler_lagrange_max"], 1e-3, "fail"))

    # projective metrizability and angular invariance
    for key in ("euclidean-2", "randers-2", "conformal-2"):
        F = metrics[key]
        St = geodesic_spray(F)
        for P in PROJECTIVE_FACTORS:
            S = make_projective_deformation(St, P)
            v = pm_levicivita_residual(S, F, s2)
            injected = as_field(P, 2).values(s2.x, s2.y)
            add(Check("pm", f"{key} P={P} Levi-Civita", v.max_residual, 1e-7))
            add(Check("pm", f"{key} P={P} recovered P", np.abs(v.recovered["P"] - injected).max(), 1e-8))
            a = angular_invariance_residual(S, F, s2)
            add(Check("angular", f"{key} P={P} invariance", a.max_residual, 1e-7))
            add(Check("angular", f"{key} P={P} forms agree", a.checks["forms_agreement_max"], 1e-9))
    flat = Spray.flat(2)
    add(Check("pm", "flat vs conformal-2 Levi-Civita", pm_levicivita_residual(flat, metrics["conformal-2"], s2).max_residual,
              1e-3, "fail"))
    add(Check("angular", "flat vs conformal-2 invariance",
              angular_invariance_residual(flat, metrics["conformal-2"], s2).max_residual, 1e-3, "fail"))

    # gyroscopic metrizability
    omega = [["0", "0.3"], ["-0.3", "0"]]
    gyro_cases = {
        "euclidean-2": (metrics["euclidean-2"], omega, lambda x: np.full(len(x), 0.3)),
        "conformal-2": (metrics["conformal-2"], [["0", "0.3*x2"], ["-0.3*x2", "0"]], lambda x: 0.3 * x[:, 1]),
    }
    for key, (F, w, w12) in gyro_cases.items():
        S = make_gyroscopic_spray(F, w)
        a = angular_invariance_residual(S, F, s2)
        g = recover_gyroscopic_form(S, F, s2)
        add(Check("gm", f"{key} angular invariance", a.max_residual, 1e-7))
        add(Check("gm", f"{key} omega recovered", np.abs(g.recovered["omega"][:, 0, 1] - w12(s2.x)).max(), 1e-8))
        add(Check("gm", f"{key} fiber spread", g.checks["fiber_spread_max"], 1e-8))
        add(Check("gm", f"{key} i_S omega", g.checks["isomega_max"], 1e-8))
    g = recover_gyroscopic_form(flat, metrics["conformal-2"], s2)
    add(Check("gm", "flat vs conformal-2 fiber spread", g.checks["fiber_spread_max"], 1e-3, "fail"))

    # symmetric / skew split reconstruction
    s50 = samples_for(2, seed=5, count=50)
    for key in ("euclidean-2", "randers-2", "conformal-2"):
        F = metrics[key]
        r = split_reconstruction_residual(geodesic_spray(F), F.F2, s50.x, s50.y)
        add(Check("split", f"{key} f=F2", np.abs(r).max(), 1e-9))
        S = make_gyroscopic_spray(F, omega)
        r = split_reconstruction_residual(S, F.F, s50.x, s50.y)
        add(Check("split", f"{key} gyroscopic f=F", np.abs(r).max(), 1e-9))

    # first integrals
    E, R = metrics["euclidean-2"], metrics["randers-2"]
    starts = list(samples_for(2, seed=101, count=TRAJECTORIES))
    trajs = integrate_geodesics(flat, starts, 1.0, 1e-3, error_estimate=False)
    drift = max(first_integral_drift(flat, E, R, tr, check_hypotheses=False).invariant_drift for tr in trajs)
    add(Check("first-integrals", "flat/euclidean/randers drift", drift, 1e-5))
    add(Check("first-integrals", "flat/euclidean/randers nabla H", nabla_H_residual(flat, E, R, s2).max_residual, 1e-7))
    for key in ("euclidean-2", "conformal-2", "randers-3"):
        F = metrics[key]
        s = pick[F.dim]
        vals, _, hy = first_integral_values(F, F, s.x, s.y)
        add(Check("first-integrals", f"{key} tr H = n-1", np.abs(vals["tr_H"] - (F.dim - 1)).max(), 1e-10))
        add(Check("first-integrals", f"{key} H y", hy, 1e-9))
    C = metrics["conformal-2"]
    add(Check("first-integrals", "geodesic(conformal-2) nabla H",
              nabla_H_residual(geodesic_spray(C), C, C, s2).max_residual, 1e-7))

    # integrator
    Sc = geodesic_spray(C)
    conv = endpoint_convergence(Sc, starts[0], 1.0, 0.1)
    add(Check("integrator", "conformal-2 halving-h error ratio", conv["ratio"], 12.0, at_least=True))
    ctraj = integrate_geodesics(Sc, starts, 1.0, 1e-3, error_estimate=False)
    energy = max(first_integral_drift(Sc, C, C, tr, check_hypotheses=False).drift["F2"] for tr in ctraj)
    add(Check("integrator", "conformal-2 energy drift", energy, 1e-6))
    return checks


def selftest(verbose: bool = False, stream=None) -> dict:
    """Run the fixture matrix and return a deterministic report (timing isolated)."""
    start = time.perf_counter()
    try:
        checks = build_checks()
        error = None
    except FinslerCheckError as exc:
        checks, error = [], str(exc)
    elapsed = time.perf_counter() - start
    rows = [c.to_dict() for c in checks]
    failed = [r for r in rows if not r["ok"]]
    report = {
        "schema_version": 1,
        "tool": {"name": "finslercheck", "version": __version__},
        "checks": rows,
        "summary": {"total": len(rows), "failed": len(failed), "passed": not failed and error is None,
                    "error": error},
        "timing": {"timestamp": datetime.now(timezone.utc).isoformat(), "seconds": elapsed},
    }
    if stream is not None:
        for r in rows:
            if verbose or not r["ok"]:
                mark = "ok  " if r["ok"] else "FAIL"
                print(f"{mark} {r['group']:<16} {r['name']:<44} {r['value']:.3e} "
                      f"(expect {r['expect']}, {'>=' if r['at_least'] else '<='} {r['threshold']:g})", file=stream)
        status = "all fixtures pass" if report["summary"]["passed"] else f"{len(failed)} fixture(s) failed"
        if error:
            status = f"error: {error}"
        print(f"{len(rows)} checks, {status} ({elapsed:.1f} s)", file=stream)
    return report
