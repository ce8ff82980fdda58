"""Residual checkers for Finsler, projective and gyroscopic metrizability.

Verdicts are statements about the sampled points only: a pass means the
pair ``(S, F)`` is consistent with the condition at every sample, within
tolerance.  Component residuals below ``tolerance`` pass, above
``fail_tolerance`` fail, and anything in between is reported inconclusive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .connection import (
    TensorField,
    connection_from_spray_jet,
    connection_jet,
    covariant_derivative_jet,
    horizontal_jet,
    spray_action_jet,
)
from .errors import ConsistencyError, DepthBudgetError, DomainError, HomogeneityError
from .expr import ScalarFieldExpr, as_field
from .fields import DerivedField, Field, StackedField, fiber_vector_jet
from .geometry import (
    FiberPoint,
    SampleConfig,
    SampleSet,
    Spray,
    homogeneity_residuals,
    locate_domain_error,
    map_points,
    per_point_max,
    sample_points,
)
from .jets import Jet, einsum, expand
from .metrics import (
    FinslerMetric,
    TensorValue,
    angular_jet,
    fiber_gradient,
    fiber_hessian_field,
    geodesic_spray,
    inverse_metric_jet,
    metric_jet,
    metric_tensor_field,
)

PASS_TOL = 1e-7
FAIL_TOL = 1e-3


@dataclass
class MetrizabilityVerdict:
    problem: str
    tolerance: float
    per_point: np.ndarray
    fail_tolerance: float = FAIL_TOL
    residuals: np.ndarray | None = field(default=None, repr=False)
    recovered: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return float(np.max(self.per_point)) if len(self.per_point) else 0.0

    @property
    def mean_residual(self) -> float:
        return float(np.mean(self.per_point)) if len(self.per_point) else 0.0

    @property
    def verdict(self) -> bool:
        return self.max_residual <= self.tolerance

    @property
    def status(self) -> str:
        if self.verdict:
            return "pass"
        return "fail" if self.max_residual > self.fail_tolerance else "inconclusive"

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "tolerance": self.tolerance,
            "fail_tolerance": self.fail_tolerance,
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "verdict": self.verdict,
            "status": self.status,
            "per_point": [float(v) for v in self.per_point],
            "recovered": _jsonify(self.recovered),
            "checks": _jsonify(self.checks),
        }


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _batched(fn, samples: SampleSet, jobs: int):
    x, y = samples.x, samples.y
    try:
        return map_points(fn, x, y, jobs)
    except DomainError as exc:
        if exc.point is not None:
            raise
        raise locate_domain_error(exc, x, y) from exc


def _point(p: FiberPoint):
    return np.asarray(p.x, float), np.asarray(p.y, float)


# -- Euler-Lagrange form -----------------------------------------------------

def euler_lagrange_jet(S: Spray, L: Field, x, y, order: int) -> Jet:
    """``S(dL/dy^i) - dL/dx^i`` as a jet of the requested order."""
    n = S.dim
    Lj = L.jet(x, y, order + 2)
    grad = fiber_gradient(Lj, n)
    out = spray_action_jet(grad, S.jet(x, y, order), y)
    return out - Jet.stack([Lj.diff(i) for i in range(n)])


def euler_lagrange_field(S: Spray, L: Field) -> DerivedField:
    return DerivedField(S.dim, (S.dim,), min(L.max_order - 2, S.max_order),
                        lambda x, y, order: euler_lagrange_jet(S, L, x, y, order),
                        f"Euler-Lagrange form of {L.name} along {S.name}")


def _euler_lagrange_second_form(S: Spray, L: Field, x, y) -> np.ndarray:
    """``nabla(dL/dy^i) - delta L/delta x^i``, the connection-based expression."""
    n = S.dim
    G = S.jet(x, y, 1)
    N = connection_from_spray_jet(G, n)
    Lj = L.jet(x, y, 2)
    grad = fiber_gradient(Lj, n)
    nabla = spray_action_jet(grad, G, y) - einsum("...ki,...k->...i", N, grad)
    delta = horizontal_jet(Lj.truncate(1), N, n)
    return (nabla - delta).value


def euler_lagrange_form(S: Spray, L: Field, p: FiberPoint) -> TensorValue:
    x, y = _point(p)
    try:
        first = euler_lagrange_jet(S, L, x, y, 0).value
        second = _euler_lagrange_second_form(S, L, x, y)
    except DomainError as exc:
        raise locate_domain_error(exc, x, y) from exc
    gap = np.max(np.abs(first - second))
    if gap > 1e-10 * (1.0 + np.max(np.abs(first))):
        raise ConsistencyError(f"Euler-Lagrange forms disagree by {gap:.3g} at {p}")
    return TensorValue((0, 1), first, p)


# -- symmetric / skew split of d(delta_S f)/dy ---------------------------

def interior_product_field(omega: Field) -> DerivedField:
    """Covector ``sigma_i = omega_ij y^j`` for a basic 2-form ``omega``."""
    n = omega.dim

    def fn(x, y, order):
        return einsum("...ij,...j->...i", omega.jet(x, y, order), fiber_vector_jet(y, order))

    return DerivedField(n, (n,), omega.max_order, fn, f"i_S({omega.name})")


def _split_parts(S: Spray, f: Field, x, y):
    """``(nabla d2f/dy dy, delta_j f_i - delta_i f_j)`` at order 0."""
    n = S.dim
    sym = covariant_derivative_jet(TensorField((0, 2), fiber_hessian_field(f)), S, x, y, 0).value
    N = connection_jet(S, x, y, 0)
    grad = fiber_gradient(f.jet(x, y, 2), n)
    D = horizontal_jet(grad, N, n).value  # D[i, j] = delta_i (df/dy^j)
    return sym, np.swapaxes(D, -1, -2) - D


def _check_homogeneous(f: Field, k: int, x, y, what: str):
    res = homogeneity_residuals(f, k, x, y)
    scale = 1.0 + np.max(np.abs(f.values(x, y)))
    if np.max(np.abs(res)) > 1e-8 * scale:
        raise HomogeneityError(f"{what} is not {k}-homogeneous in y (residual {np.max(np.abs(res)):.3g})")


def split_residual(S: Spray, f: Field, sigma: Field | None, k: int, p: FiberPoint):
    """Residuals of the symmetric and skew-symmetric equations equivalent to ``delta_S f = sigma``.

    The skew equation is taken in the orientation that the y-derivative of the
    Euler-Lagrange components actually produces:
    ``delta_j(df/dy^i) - delta_i(df/dy^j) = (dsigma_i/dy^j - dsigma_j/dy^i) / 2``.
    """
    if k == 0:
        raise ValueError("homogeneity degree must be non-zero")
    x, y = _point(p)
    _check_homogeneous(f, k, x, y, f"f = {f.name}")
    n = S.dim
    if sigma is None:
        dsig = np.zeros((n, n))
    else:
        _check_homogeneous(sigma, k, x, y, f"sigma = {sigma.name}")
        dsig = fiber_gradient(sigma.jet(x, y, 1), n).value  # [i, j] = dsigma_i / dy^j
    try:
        sym, skew = _split_parts(S, f, x, y)
    except DomainError as exc:
        raise locate_domain_error(exc, x, y) from exc
    eq1 = sym - 0.5 * (dsig + dsig.T)
    eq2 = skew - 0.5 * (dsig - dsig.T)
    return TensorValue((0, 2), eq1, p), TensorValue((0, 2), eq2, p)


def split_reconstruction_residual(S: Spray, f: Field, x, y) -> np.ndarray:
    """Batched ``d(delta_S f)_i/dy^j - (sym + skew)`` with the parts from the split."""
    n = S.dim
    direct = fiber_gradient(euler_lagrange_jet(S, f, x, y, 1), n).value
    sym, skew = _split_parts(S, f, x, y)
    return direct - (sym + skew)


# -- Finsler metrizability ----------------------------------------------------

def fm_residual(S: Spray, F: FinslerMetric, samples: SampleSet, tol: float = PASS_TOL,
                fail_tol: float = FAIL_TOL, jobs: int = 1) -> MetrizabilityVerdict:
    """``nabla g_ij`` at every sample, cross-checked against ``delta_S F^2``."""
    g = TensorField((0, 2), metric_tensor_field(F))

    def fn(x, y):
        ng = covariant_derivative_jet(g, S, x, y, 0).value
        el = euler_lagrange_jet(S, F.F2, x, y, 0).value
        return ng, el

    ng, el = _batched(fn, samples, jobs)
    per = per_point_max(ng)
    el_per = per_point_max(el)
    el_max = float(el_per.max())
    return MetrizabilityVerdict(
        "FM", tol, per, fail_tol, residuals=ng,
        checks={
            "euler_lagrange_max": el_max,
            "euler_lagrange_verdict": el_max <= tol,
            "equivalence_consistent": (el_max <= tol) == bool(per.max() <= tol),
        },
    )


# -- projective metrizability -------------------------------------------------

def projective_factor_jet(S: Spray, Ft: FinslerMetric, x, y, order: int) -> Jet:
    Fj = Ft.F.jet(x, y, order + 1)
    if np.any(Fj.value <= 0):
        raise DomainError("Finsler function is not positive", mask=Fj.value <= 0)
    return spray_action_jet(Fj, S.jet(x, y, order), y) / (2.0 * Fj.truncate(order))


def projective_factor_field(S: Spray, Ft: FinslerMetric) -> DerivedField:
    return DerivedField(S.dim, (), min(S.max_order, Ft.F.max_order - 1),
                        lambda x, y, order: projective_factor_jet(S, Ft, x, y, order),
                        f"projective factor of {S.name} w.r.t. {Ft.name}")


def recover_projective_factor(S: Spray, Ft: FinslerMetric, p: FiberPoint) -> float:
    """``P = S(F~) / (2 F~)`` at ``p``, after a 1-homogeneity scaling check."""
    x, y = _point(p)
    try:
        P = float(projective_factor_jet(S, Ft, x, y, 0).value)
        P2 = float(projective_factor_jet(S, Ft, x, 2.0 * y, 0).value)
    except DomainError as exc:
        raise locate_domain_error(exc, x, y) from exc
    if abs(P2 - 2.0 * P) > 1e-8 * (1.0 + abs(P2)):
        raise HomogeneityError(f"recovered P is not 1-homogeneous: P(2y) = {P2}, 2 P(y) = {2 * P}")
    return P


def pm_levicivita_residual(S: Spray, Ft: FinslerMetric, samples: SampleSet, tol: float = PASS_TOL,
                           fail_tol: float = FAIL_TOL, jobs: int = 1) -> MetrizabilityVerdict:
    """Levi-Civita residual with the projective factor recovered per point.

    Also evaluates the contracted consequences (the covector identities for
    ``nabla dF~^2/dy`` and ``delta F~^2/delta x``) and the Hamel-type form
    ``delta_S F~^2 - 2 P d_J F~^2``.
    """
    n = S.dim
    gt = TensorField((0, 2), metric_tensor_field(Ft))

    def fn(x, y):
        Pj = projective_factor_jet(S, Ft, x, y, 1)
        P = Pj.value
        dP = fiber_gradient(Pj, n).value
        g = metric_jet(Ft, x, y, 0).value
        ng = covariant_derivative_jet(gt, S, x, y, 0).value
        gy = np.einsum("...ij,...j->...i", g, y)
        R = (ng - 2.0 * P[..., None, None] * g
             - dP[..., :, None] * gy[..., None, :]
             - dP[..., None, :] * gy[..., :, None])

        G = S.jet(x, y, 1)
        N = connection_from_spray_jet(G, n)
        F2j = Ft.F2.jet(x, y, 2)
        phi = fiber_gradient(F2j, n)
        nabla_phi = (spray_action_jet(phi, G, y) - einsum("...ki,...k->...i", N, phi)).value
        delta_F2 = horizontal_jet(F2j.truncate(1), N, n).value
        F2 = F2j.value[..., None]
        phi0 = phi.value
        npfy = nabla_phi - 3.0 * P[..., None] * phi0 - 2.0 * F2 * dP
        dpfy = delta_F2 - P[..., None] * phi0 - 2.0 * F2 * dP
        hamel2 = euler_lagrange_jet(S, Ft.F2, x, y, 0).value - 2.0 * P[..., None] * phi0
        return R, P, per_point_max(npfy), per_point_max(dpfy), per_point_max(hamel2)

    R, P, npfy, dpfy, hamel2 = _batched(fn, samples, jobs)
    per = per_point_max(R)
    passed = bool(per.max() <= tol)
    hamel_max = float(hamel2.max())
    return MetrizabilityVerdict(
        "PM", tol, per, fail_tol, residuals=R,
        recovered={"P": P},
        checks={
            "contracted_nabla_max": float(npfy.max()),
            "contracted_delta_max": float(dpfy.max()),
            "consequences_hold": (float(max(npfy.max(), dpfy.max())) <= tol) if passed else None,
            "hamel_F2_max": hamel_max,
            "equivalence_consistent": (hamel_max <= tol) == passed,
        },
    )


def _angular_over_F_jet(Ft: FinslerMetric, x, y, order: int) -> Jet:
    return angular_jet(Ft, x, y, order) / expand(Ft.F.jet(x, y, order), 2)


def angular_over_F_field(Ft: FinslerMetric) -> DerivedField:
    return DerivedField(Ft.dim, (Ft.dim, Ft.dim), min(Ft.F2.max_order - 2, Ft.F.max_order - 1),
                        lambda x, y, order: _angular_over_F_jet(Ft, x, y, order),
                        f"h/F of {Ft.name}")


def angular_invariance_residual(S: Spray, Ft: FinslerMetric, samples: SampleSet, tol: float = PASS_TOL,
                                fail_tol: float = FAIL_TOL, jobs: int = 1) -> MetrizabilityVerdict:
    """``nabla(d2F~/dy dy)``, cross-checked against ``nabla(h~/F~)``."""
    hess = TensorField((0, 2), fiber_hessian_field(Ft.F))
    hof = TensorField((0, 2), angular_over_F_field(Ft))

    def fn(x, y):
        a = covariant_derivative_jet(hess, S, x, y, 0).value
        b = covariant_derivative_jet(hof, S, x, y, 0).value
        return a, per_point_max(a - b)

    a, gap = _batched(fn, samples, jobs)
    per = per_point_max(a)
    return MetrizabilityVerdict(
        "ANGULAR", tol, per, fail_tol, residuals=a,
        checks={"forms_agreement_max": float(gap.max())},
    )


# -- gyroscopic metrizability -------------------------------------------------

def gyroscopic_form_jet(S: Spray, Ft: FinslerMetric, x, y, order: int) -> Jet:
    """``omega_ij = delta_j(dF~/dy^i) - delta_i(dF~/dy^j)`` as a jet.

    This orientation is the one for which ``delta_S F~ = omega_ij y^j``.
    """
    n = S.dim
    ell = fiber_gradient(Ft.F.jet(x, y, order + 2), n)
    N = connection_jet(S, x, y, order)
    D = horizontal_jet(ell, N, n)
    return D.T - D


def gyroscopic_form_field(S: Spray, Ft: FinslerMetric) -> DerivedField:
    return DerivedField(S.dim, (S.dim, S.dim), min(Ft.F.max_order - 2, S.max_order - 1),
                        lambda x, y, order: gyroscopic_form_jet(S, Ft, x, y, order),
                        f"recovered 2-form of {S.name} w.r.t. {Ft.name}")


def fiber_probes(config: SampleConfig, count: int) -> np.ndarray:
    """Extra fiber vectors (shared by all base points) for fiber-independence tests."""
    probe = SampleConfig(seed=config.seed + 1, count=count, box=config.box,
                         shell=config.shell, y_min=config.y_min)
    return sample_points(probe).y


def recover_gyroscopic_form(S: Spray, Ft: FinslerMetric, samples: SampleSet, tol: float = PASS_TOL,
                            fail_tol: float = FAIL_TOL, fiber_count: int = 4,
                            jobs: int = 1) -> MetrizabilityVerdict:
    """Recover the candidate basic 2-form and test it.

    At each base point the form is evaluated at the sample's own fiber vector
    and ``fiber_count - 1`` shared probes; their spread measures fiber
    dependence.  The mean is then checked against ``delta_S F~ = i_S omega``.
    When the depth budget allows, ``d omega/dy`` is evaluated as a second,
    independent detector.
    """
    if fiber_count < 3:
        raise ValueError("need at least 3 fiber vectors per base point")
    n = S.dim
    probes = fiber_probes(samples.config, fiber_count - 1)

    def fn(x, y):
        P = len(x)
        ys = np.concatenate([y[:, None, :], np.broadcast_to(probes, (P,) + probes.shape)], axis=1)
        xs = np.broadcast_to(x[:, None, :], ys.shape)
        om = gyroscopic_form_jet(S, Ft, xs, ys, 0).value  # (P, m, n, n)
        spread = (om.max(axis=1) - om.min(axis=1)).reshape(P, -1).max(axis=1)
        mean = om.mean(axis=1)
        skew = per_point_max(om + np.swapaxes(om, -1, -2))
        el = euler_lagrange_jet(S, Ft.F, x, y, 0).value
        iso = per_point_max(el - np.einsum("...ij,...j->...i", mean, y))
        return mean, spread, iso, skew

    mean, spread, iso, skew = _batched(fn, samples, jobs)
    checks = {
        "fiber_spread_max": float(spread.max()),
        "isomega_max": float(iso.max()),
        "skew_symmetry_max": float(skew.max()),
        "fiber_count": fiber_count,
    }
    try:
        omf = gyroscopic_form_field(S, Ft)
        domega = _batched(lambda x, y: per_point_max(fiber_gradient(omf.jet(x, y, 1), n).value), samples, jobs)
        checks["fiber_derivative_max"] = float(domega.max())
    except DepthBudgetError as exc:
        checks["fiber_derivative_max"] = None
        checks["fiber_derivative_skipped"] = str(exc)
    per = np.maximum(spread, iso)
    return MetrizabilityVerdict(
        "GM", tol, per, fail_tol, residuals=mean,
        recovered={"omega": mean, "base_points": samples.x},
        checks=checks,
    )


def hamel_residual(S: Spray, Ft: FinslerMetric, p: FiberPoint) -> TensorValue:
    """Components of ``delta_S F~`` at ``p``."""
    x, y = _point(p)
    Fv = Ft.F.values(x, y)
    if Fv <= 0:
        raise DomainError(f"Finsler function is not positive ({float(Fv)})", point=p)
    return euler_lagrange_form(S, Ft.F, p)


def hamel_report(S: Spray, Ft: FinslerMetric, samples: SampleSet, tol: float = PASS_TOL,
                 fail_tol: float = FAIL_TOL, jobs: int = 1) -> MetrizabilityVerdict:
    el = _batched(lambda x, y: euler_lagrange_jet(S, Ft.F, x, y, 0).value, samples, jobs)
    return MetrizabilityVerdict("HAMEL", tol, per_point_max(el), fail_tol, residuals=el)


# -- fixture constructors ------------------------------------------------------

def _probe_points(n: int):
    s = sample_points(SampleConfig.cube(n, count=16, seed=0))
    return s.x, s.y


def make_projective_deformation(St: Spray, P, name: str | None = None) -> Spray:
    """The spray ``S = S~ + 2 P C``, i.e. ``G^i = G~^i - P y^i``."""
    n = St.dim
    Pf = as_field(P, n)
    x, y = _probe_points(n)
    _check_homogeneous(Pf, 1, x, y, f"projective factor {Pf.name}")

    def fn(x, y, order):
        return St.jet(x, y, order) - expand(Pf.jet(x, y, order), 1) * fiber_vector_jet(y, order)

    return St.with_coefficients(fn, min(St.max_order, Pf.max_order),
                                name or f"{St.name} + 2({Pf.name})C")


def basic_two_form(omega, n: int) -> Field:
    """Validate and wrap an ``n x n`` skew matrix of base-only entries."""
    if isinstance(omega, Field):
        f = omega
    else:
        rows = [[as_field(v, n) for v in row] for row in omega]
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ValueError(f"omega must be {n}x{n}")
        for row in rows:
            for e in row:
                if isinstance(e, ScalarFieldExpr) and e.depends_on_fiber:
                    raise ValueError(f"omega entries must depend on x only, got {e.source!r}")
        f = StackedField(rows, name="omega")
    x, y = _probe_points(n)
    w = f.values(x, y)
    if np.max(np.abs(w + np.swapaxes(w, -1, -2))) > 1e-12 * (1 + np.max(np.abs(w))):
        raise ValueError("omega must be skew-symmetric")
    if f.max_order >= 1 and np.max(np.abs(fiber_gradient(f.jet(x, y, 1), n).value)) > 1e-12:
        raise ValueError("omega must not depend on the fiber coordinates")
    return f


def make_gyroscopic_spray(Ft: FinslerMetric, omega, name: str | None = None) -> Spray:
    """Spray with ``delta_S F~ = omega_ij y^j``: ``G^i = G~^i + Q^i``.

    ``Q^j = -(F~/2) g~^{jk} omega_kl y^l``.  The change in ``delta_S F~`` is
    ``-2 Q^j h~_ji / F~``; since ``l_j g~^{jk} = y^k / F~`` and
    ``omega_kl y^k y^l = 0`` this equals ``omega_il y^l``.
    """
    n = Ft.dim
    w = basic_two_form(omega, n)
    base = geodesic_spray(Ft)

    def fn(x, y, order):
        Fj = Ft.F.jet(x, y, order)
        ginv = inverse_metric_jet(metric_jet(Ft, x, y, order))
        wy = einsum("...kl,...l->...k", w.jet(x, y, order), fiber_vector_jet(y, order))
        Q = -0.5 * expand(Fj, 1) * einsum("...jk,...k->...j", ginv, wy)
        return base.jet(x, y, order) + Q

    max_order = min(base.max_order, Ft.F.max_order, w.max_order)
    return Spray(DerivedField(n, (n,), max_order, fn, "gyroscopic coefficients"),
                 name=name or f"gyroscopic({Ft.name})")
