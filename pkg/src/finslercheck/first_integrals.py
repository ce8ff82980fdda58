"""The invariant (1,1)-tensor ``H = (F/F~) g^-1 h~``, its spectral scalars,
geodesic integration and drift of the induced first integrals."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .connection import TensorField, covariant_derivative_jet
from .errors import ConsistencyError, DomainError
from .fields import DerivedField
from .geometry import (
    DEFAULT_Y_MIN,
    FiberPoint,
    ResidualReport,
    SampleSet,
    Spray,
    locate_domain_error,
    map_points,
    per_point_max,
)
from .jets import Jet, einsum, expand
from .metrics import (
    FinslerMetric,
    TensorValue,
    angular_jet,
    fiber_hessian_field,
    inverse_metric_jet,
    metric_jet,
    metric_tensor_field,
)

DEFAULT_STEP = 1e-3


# -- the invariant tensor ----------------------------------------------------

def h_tensor_jet(F: FinslerMetric, Ft: FinslerMetric, x, y, order: int) -> Jet:
    """``H^i_j = (F/F~) g^ik h~_kj`` as a jet."""
    ginv = inverse_metric_jet(metric_jet(F, x, y, order))
    ht = angular_jet(Ft, x, y, order)
    ratio = F.F.jet(x, y, order) / Ft.F.jet(x, y, order)
    return expand(ratio, 2) * einsum("...ik,...kj->...ij", ginv, ht)


def h_tensor_field(F: FinslerMetric, Ft: FinslerMetric) -> DerivedField:
    max_order = min(F.F2.max_order - 2, Ft.F2.max_order - 2, Ft.F.max_order - 1, F.F.max_order)
    return DerivedField(F.dim, (F.dim, F.dim), max_order,
                        lambda x, y, order: h_tensor_jet(F, Ft, x, y, order),
                        f"H of ({F.name}, {Ft.name})")


def _h_tensor_quartic(F: FinslerMetric, Ft: FinslerMetric, x, y) -> np.ndarray:
    """``(F/F~^3) g^ik (g~_kj g~_ls - g~_kl g~_js) y^l y^s``."""
    ginv = np.linalg.inv(metric_jet(F, x, y, 0).value)
    gt = metric_jet(Ft, x, y, 0).value
    gty = np.einsum("...kl,...l->...k", gt, y)
    q = np.einsum("...l,...l->...", gty, y)
    inner = gt * q[..., None, None] - gty[..., :, None] * gty[..., None, :]
    scale = F.F.values(x, y) / Ft.F.values(x, y) ** 3
    return scale[..., None, None] * np.einsum("...ik,...kj->...ij", ginv, inner)


def h_tensor(F: FinslerMetric, Ft: FinslerMetric, p: FiberPoint) -> TensorValue:
    """``H`` at ``p``, cross-checked against the quartic expression."""
    x, y = np.asarray(p.x, float), np.asarray(p.y, float)
    try:
        H = h_tensor_jet(F, Ft, x, y, 0).value
        H2 = _h_tensor_quartic(F, Ft, x, y)
    except DomainError as exc:
        raise locate_domain_error(exc, x, y) from exc
    gap = np.max(np.abs(H - H2))
    if gap > 1e-9 * (1.0 + np.max(np.abs(H))):
        raise ConsistencyError(f"the two expressions for H disagree by {gap:.3g} at {p}")
    return TensorValue((1, 1), H, p)


# -- characteristic scalars --------------------------------------------------

@dataclass
class Characteristic:
    """Elementary symmetric functions ``e_1 = tr .. e_n = det`` and the sorted spectrum.

    Complex pairs are stored as ``(re, |im|)``; ``complex`` flags them.
    """

    coefficients: np.ndarray
    eigenvalues: np.ndarray
    imag: np.ndarray
    complex: np.ndarray


def characteristic_coefficients(H) -> Characteristic:
    """Faddeev-LeVerrier trace recursion, batched over leading axes."""
    A = np.asarray(H, float)
    n = A.shape[-1]
    eye = np.broadcast_to(np.eye(n), A.shape)
    M = np.zeros_like(A)
    c = 1.0  # c_n
    out = []
    for k in range(1, n + 1):
        M = A @ M + (c[..., None, None] if np.ndim(c) else c) * eye
        c = -np.trace(A @ M, axis1=-2, axis2=-1) / k
        out.append((-1) ** k * c)
    coeffs = np.stack(out, axis=-1)

    ev = np.linalg.eigvals(A)
    re, im = ev.real, np.abs(ev.imag)
    order = np.lexsort((im, re), axis=-1)
    re = np.take_along_axis(re, order, axis=-1)
    im = np.take_along_axis(im, order, axis=-1)
    scale = 1.0 + np.max(np.abs(re), axis=-1, keepdims=True)
    flag = np.any(im > 1e-12 * scale, axis=-1)
    return Characteristic(coeffs, re, im, flag)


# -- geodesic integration ----------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    method: str = "rk4"
    step: float = DEFAULT_STEP
    error_estimate: float | None = None
    truncated: bool = False
    reason: str | None = None

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dimension(self) -> int:
        return self.x.shape[-1]

    def metadata(self) -> dict:
        return {"method": self.method, "step": self.step, "states": len(self),
                "error_estimate": self.error_estimate, "truncated": self.truncated,
                "reason": self.reason}


def _rhs(S: Spray, x, y):
    return y, -2.0 * S.values(x, y)


def _rk4(S: Spray, x0, y0, h: float, steps: int, y_min: float):
    """Batched RK4 for ``x' = y, y' = -2 G(x, y)``.

    Returns state arrays ``(steps+1, B, n)`` and the last valid index per
    trajectory; integration of a trajectory stops once ``|y| < y_min`` or
    the state stops being finite (blow-up).
    """
    B, n = x0.shape
    xs = np.empty((steps + 1, B, n))
    ys = np.empty((steps + 1, B, n))
    xs[0], ys[0] = x0, y0
    last = np.full(B, steps)
    alive = np.ones(B, bool)
    blown = np.zeros(B, bool)
    x, y = x0.copy(), y0.copy()
    for k in range(steps):
        k1x, k1y = _rhs(S, x, y)
        k2x, k2y = _rhs(S, x + 0.5 * h * k1x, y + 0.5 * h * k1y)
        k3x, k3y = _rhs(S, x + 0.5 * h * k2x, y + 0.5 * h * k2y)
        k4x, k4y = _rhs(S, x + h * k3x, y + h * k3y)
        x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        y = y + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        finite = np.isfinite(x).all(axis=-1) & np.isfinite(y).all(axis=-1)
        with np.errstate(over="ignore", invalid="ignore"):
            low = alive & (~finite | ~(np.linalg.norm(np.where(finite[:, None], y, 0.0), axis=-1) >= y_min))
        blown = blown | (alive & ~finite)
        last[low] = k
        alive &= ~low
        if not alive.any():
            return xs[: k + 1], ys[: k + 1], last, blown
        # frozen trajectories keep their last valid state so the batch stays finite
        x[~alive] = xs[k][~alive]
        y[~alive] = ys[k][~alive]
        xs[k + 1], ys[k + 1] = x, y
    return xs, ys, last, blown


def _grid(t_end: float, h: float):
    if not t_end > 0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    steps = max(1, int(round(t_end / h)))
    return steps, t_end / steps


def integrate_geodesics(S: Spray, starts, t_end: float = 1.0, h: float = DEFAULT_STEP,
                        y_min: float = DEFAULT_Y_MIN, error_estimate: bool = True) -> list:
    """Integrate several geodesics in one batch with fixed-step RK4.

    ``error_estimate`` repeats the run at ``h/2`` and reports
    ``max |z_h - z_{h/2}| / 15`` at the endpoint.  A trajectory that hits
    ``|y| < y_min`` or an evaluation domain error is returned truncated.
    """
    starts = list(starts)
    if not starts:
        return []
    x0 = np.array([p.x for p in starts], float)
    y0 = np.array([p.y for p in starts], float)
    steps, h = _grid(t_end, h)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            xs, ys, last, blown = _rk4(S, x0, y0, h, steps, y_min)
            if error_estimate:
                xf, yf, last_f, _ = _rk4(S, x0, y0, h / 2, 2 * steps, y_min)
    except DomainError:
        if len(starts) == 1:
            return [_integrate_with_domain_guard(S, starts[0], h, steps, y_min, error_estimate)]
        return [integrate_geodesic(S, p, t_end, h, y_min, error_estimate) for p in starts]

    out = []
    for b in range(len(starts)):
        k = int(last[b])
        t = np.arange(k + 1) * h
        traj = Trajectory(t, xs[: k + 1, b].copy(), ys[: k + 1, b].copy(), step=h)
        if k < steps:
            traj.truncated = True
            traj.reason = (f"state blew up after t = {t[-1]:.6g}" if blown[b]
                           else f"|y| dropped below y_min = {y_min} after t = {t[-1]:.6g}")
        elif error_estimate and last_f[b] == 2 * steps:
            zc = np.concatenate([xs[-1, b], ys[-1, b]])
            zf = np.concatenate([xf[-1, b], yf[-1, b]])
            traj.error_estimate = float(np.max(np.abs(zc - zf)) / 15.0)
        out.append(traj)
    return out


def _integrate_with_domain_guard(S: Spray, p0: FiberPoint, h: float, steps: int, y_min: float,
                                 error_estimate: bool) -> Trajectory:
    """Step one trajectory at a time so a domain error truncates instead of aborting."""
    x = np.array([p0.x], float)
    y = np.array([p0.y], float)
    xs, ys = [x[0]], [y[0]]
    reason = None
    for k in range(steps):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                xn, yn, last, blown = _rk4(S, x, y, h, 1, y_min)
        except DomainError as exc:
            reason = f"domain error after t = {k * h:.6g}: {exc}"
            break
        if last[0] < 1:
            reason = (f"state blew up after t = {k * h:.6g}" if blown[0]
                      else f"|y| dropped below y_min = {y_min} after t = {k * h:.6g}")
            break
        x, y = xn[-1], yn[-1]
        xs.append(x[0])
        ys.append(y[0])
    traj = Trajectory(np.arange(len(xs)) * h, np.array(xs), np.array(ys), step=h)
    if reason is not None:
        traj.truncated, traj.reason = True, reason
    elif error_estimate:
        fine = integrate_geodesics(S, [p0], steps * h, h / 2, y_min, error_estimate=False)[0]
        if not fine.truncated:
            zc = np.concatenate([traj.x[-1], traj.y[-1]])
            zf = np.concatenate([fine.x[-1], fine.y[-1]])
            traj.error_estimate = float(np.max(np.abs(zc - zf)) / 15.0)
    return traj


def integrate_geodesic(S: Spray, p0: FiberPoint, t_end: float = 1.0, h: float = DEFAULT_STEP,
                       y_min: float = DEFAULT_Y_MIN, error_estimate: bool = True) -> Trajectory:
    """Solve ``x'' + 2 G(x, x') = 0`` from ``p0`` on ``[0, t_end]``."""
    steps, h = _grid(t_end, h)
    try:
        return integrate_geodesics(S, [p0], t_end, h, y_min, error_estimate)[0]
    except DomainError:
        return _integrate_with_domain_guard(S, p0, h, steps, y_min, error_estimate)


def endpoint_convergence(S: Spray, p0: FiberPoint, t_end: float = 1.0, h: float = 0.1,
                         refine: int = 64) -> dict:
    """Endpoint errors at ``h`` and ``h/2`` against a run at ``h/refine``."""
    def end(step):
        tr = integrate_geodesic(S, p0, t_end, step, error_estimate=False)
        if tr.truncated:
            raise DomainError(f"trajectory truncated: {tr.reason}")
        return np.concatenate([tr.x[-1], tr.y[-1]])

    ref = end(h / refine)
    e1 = float(np.max(np.abs(end(h) - ref)))
    e2 = float(np.max(np.abs(end(h / 2) - ref)))
    return {"h": h, "error_h": e1, "error_half": e2, "ratio": e1 / e2 if e2 > 0 else float("inf"),
            "observed_order": float(np.log2(e1 / e2)) if e1 > 0 and e2 > 0 else float("nan")}


# -- first integrals along trajectories --------------------------------------

def scalar_names(n: int) -> list:
    return (["F2", "tr_H", "tr_H2"] + [f"c{k}" for k in range(1, n + 1)]
            + [f"eig{k}" for k in range(1, n + 1)])


@dataclass
class FirstIntegralSeries:
    names: list
    values: dict
    complex_spectrum: np.ndarray
    hy_max: float = 0.0
    hypotheses: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.values[self.names[0]]) if self.names else 0

    @property
    def drift(self) -> dict:
        out = {}
        for k in self.names:
            v = np.asarray(self.values[k])
            out[k] = float(np.max(np.abs(v - v[0])) / (1.0 + abs(v[0]))) if len(v) else 0.0
        return out

    @property
    def invariant_drift(self) -> float:
        """Largest drift among the spectral scalars of ``H`` (``F2`` excluded)."""
        d = self.drift
        return max((d[k] for k in self.names if k != "F2"), default=0.0)

    def eigen_continuity(self) -> dict:
        """Per-step jumps of the sorted spectrum against the crossing-safe coefficients."""
        eig = np.array([self.values[k] for k in self.names if k.startswith("eig")]).T
        coef = np.array([self.values[k] for k in self.names if k.startswith("c")]).T
        if len(eig) < 2:
            return {"eigen_max_jump": 0.0, "coefficient_max_jump": 0.0, "crossing": False, "min_gap": None}
        ej = float(np.max(np.abs(np.diff(eig, axis=0))))
        cj = float(np.max(np.abs(np.diff(coef, axis=0))))
        gaps = np.diff(eig, axis=1)
        min_gap = float(gaps.min()) if gaps.size else None
        return {"eigen_max_jump": ej, "coefficient_max_jump": cj,
                "crossing": bool(ej > 10.0 * max(cj, 1e-12)), "min_gap": min_gap}

    def to_dict(self) -> dict:
        return {"drift": self.drift, "invariant_drift": self.invariant_drift,
                "complex_spectrum": bool(np.any(self.complex_spectrum)),
                "hy_max": self.hy_max, "eigen_continuity": self.eigen_continuity(),
                "hypotheses": self.hypotheses}


def first_integral_values(F: FinslerMetric, Ft: FinslerMetric, x, y):
    """Tracked scalars at a batch of states, plus the complex flag and ``max |H y|``."""
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    n = x.shape[-1]
    H = h_tensor_jet(F, Ft, x, y, 0).value
    ch = characteristic_coefficients(H)
    vals = {"F2": F.F2.values(x, y),
            "tr_H": np.trace(H, axis1=-2, axis2=-1),
            "tr_H2": np.trace(H @ H, axis1=-2, axis2=-1)}
    for k in range(n):
        vals[f"c{k + 1}"] = ch.coefficients[:, k]
        vals[f"eig{k + 1}"] = ch.eigenvalues[:, k]
    hy = np.abs(np.einsum("...ij,...j->...i", H, y)).max() if len(x) else 0.0
    return vals, ch.complex, float(hy)


def first_integral_drift(S: Spray, F: FinslerMetric, Ft: FinslerMetric, traj: Trajectory,
                         check_hypotheses: bool = True, tol: float = 1e-7) -> FirstIntegralSeries:
    """Spectral scalars of ``H`` along ``traj`` and their drift.

    When ``check_hypotheses`` is set, ``nabla g`` and ``nabla(d2F~/dy dy)`` are
    evaluated at a subset of states; a violation only triggers a warning.
    """
    n = traj.dimension
    names = scalar_names(n)
    if len(traj) == 0:
        return FirstIntegralSeries(names, {k: np.zeros(0) for k in names}, np.zeros(0, bool))
    try:
        vals, cplx, hy = first_integral_values(F, Ft, traj.x, traj.y)
    except DomainError as exc:
        raise locate_domain_error(exc, traj.x, traj.y) from exc
    series = FirstIntegralSeries(names, vals, cplx, hy)
    if check_hypotheses:
        idx = np.unique(np.linspace(0, len(traj) - 1, min(len(traj), 11)).astype(int))
        xs, ys = traj.x[idx], traj.y[idx]
        ng = covariant_derivative_jet(TensorField((0, 2), metric_tensor_field(F)), S, xs, ys, 0).value
        na = covariant_derivative_jet(TensorField((0, 2), fiber_hessian_field(Ft.F)), S, xs, ys, 0).value
        series.hypotheses = {"nabla_g_max": float(np.abs(ng).max()),
                             "angular_invariance_max": float(np.abs(na).max())}
        if max(series.hypotheses.values()) > tol:
            warnings.warn(f"{S.name} does not satisfy the invariance hypotheses for H "
                          f"({series.hypotheses}); drift documents the failure", RuntimeWarning, stacklevel=2)
    return series


def nabla_H_residual(S: Spray, F: FinslerMetric, Ft: FinslerMetric, samples: SampleSet,
                     tol: float = 1e-7, jobs: int = 1) -> ResidualReport:
    """``nabla H`` by the (1,1) rule at every sample."""
    T = TensorField((1, 1), h_tensor_field(F, Ft))
    x, y = samples.x, samples.y
    try:
        per = map_points(lambda xc, yc: per_point_max(covariant_derivative_jet(T, S, xc, yc, 0).value),
                         x, y, jobs)
    except DomainError as exc:
        raise locate_domain_error(exc, x, y) from exc
    return ResidualReport(f"nabla H ({S.name}; {F.name}, {Ft.name})", tol, per)
