"""Finsler structures and the quantities they induce.

Every metric carries two expression fields, ``F`` and ``F2`` (its square).
``F2`` is given its own expression so that, e.g., the Euclidean square stays
a polynomial and its third derivatives vanish exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, DegenerateMetricError, DomainError
from .expr import ScalarFieldExpr, as_field, parse_expression
from .fields import DerivedField, Field, fiber_vector_jet
from .geometry import (
    FiberPoint,
    SampleSet,
    Spray,
    locate_domain_error,
    map_points,
)
from .jets import Jet, einsum, expand, inverse

RANK_RTOL = 1e-7


@dataclass
class TensorValue:
    """A tensor evaluated at one point; ``valence`` is ``(contravariant, covariant)``."""

    valence: tuple
    data: np.ndarray
    point: FiberPoint | None = None
    inverse: np.ndarray | None = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return self.data.shape[0] if self.data.ndim else 0

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.data, dtype=dtype)


def numerical_rank(mat, rtol: float = RANK_RTOL):
    s = np.linalg.svd(np.asarray(mat), compute_uv=False)
    top = s[..., :1]
    return (s > rtol * np.maximum(top, np.finfo(float).tiny)).sum(axis=-1), s


def _quadratic_form(a, n: int) -> str:
    terms = []
    for i in range(n):
        for j in range(n):
            aij = str(a[i][j]).strip()
            if aij in ("0", "0.0"):
                continue
            terms.append(f"({aij})*y{i + 1}*y{j + 1}")
    return " + ".join(terms) if terms else "0"


def _euclidean_square(n: int) -> str:
    return " + ".join(f"y{i + 1}^2" for i in range(n))


class FinslerMetric:
    """A Finsler function ``F`` with its square and a family tag."""

    def __init__(self, F: Field, F2: Field | None = None, family: str = "custom",
                 params: dict | None = None, name: str | None = None):
        self.F = F
        self.dim = F.dim
        self.F2 = F2 if F2 is not None else _square_field(F)
        self.family = family
        self.params = params or {}
        self.name = name or family

    def __repr__(self) -> str:
        return f"FinslerMetric({self.name!r}, family={self.family!r}, F={getattr(self.F, 'source', self.F)!r})"

    # -- families ----------------------------------------------------
    @classmethod
    def euclidean(cls, n: int, name: str = "euclidean") -> "FinslerMetric":
        sq = _euclidean_square(n)
        return cls(parse_expression(f"sqrt({sq})", n), parse_expression(sq, n), "euclidean", {}, name)

    @classmethod
    def riemannian(cls, a, name: str = "riemannian") -> "FinslerMetric":
        n = len(a)
        _require_base_only(a, n, "riemannian metric entries")
        quad = _quadratic_form(a, n)
        params = {"a": [[_jsonable(v) for v in row] for row in a]}
        return cls(parse_expression(f"sqrt({quad})", n), parse_expression(quad, n), "riemannian", params, name)

    @classmethod
    def randers(cls, a, b, name: str = "randers") -> "FinslerMetric":
        n = len(b)
        _require_base_only(a, n, "randers a entries")
        _require_base_only([b], n, "randers b entries")
        if all(isinstance(v, (int, float)) for row in a for v in row) and all(isinstance(v, (int, float)) for v in b):
            am = np.array(a, float)
            bv = np.array(b, float)
            norm2 = float(bv @ np.linalg.solve(am, bv))
            if not norm2 < 1.0:
                raise ValueError(f"randers drift must satisfy |b|_a < 1, got |b|_a = {np.sqrt(norm2):.4g}")
        alpha = f"sqrt({_quadratic_form(a, n)})"
        beta = " + ".join(f"({bi})*y{i + 1}" for i, bi in enumerate(b) if str(bi).strip() not in ("0", "0.0")) or "0"
        F = f"{alpha} + {beta}"
        params = {"a": [[_jsonable(v) for v in row] for row in a], "b": [_jsonable(v) for v in b]}
        return cls(parse_expression(F, n), parse_expression(f"({F})^2", n), "randers", params, name)

    @classmethod
    def conformal(cls, phi, n: int, name: str = "conformal") -> "FinslerMetric":
        """``F = exp(phi(x)) |y|``, i.e. ``g = exp(2 phi) delta``."""
        _require_base_only([[phi]], n, "conformal factor")
        sq = _euclidean_square(n)
        F = parse_expression(f"exp({phi})*sqrt({sq})", n)
        F2 = parse_expression(f"exp(2*({phi}))*({sq})", n)
        return cls(F, F2, "conformal", {"phi": _jsonable(phi)}, name)

    @classmethod
    def custom(cls, F, n: int, name: str = "custom") -> "FinslerMetric":
        Ff = as_field(F, n)
        F2 = parse_expression(f"({Ff.source})^2", n) if isinstance(Ff, ScalarFieldExpr) else None
        return cls(Ff, F2, "custom", {"F": getattr(Ff, "source", str(F))}, name)

    @classmethod
    def from_spec(cls, spec: dict, n: int, name: str = "metric") -> "FinslerMetric":
        family = spec["family"]
        if family == "euclidean":
            return cls.euclidean(n, name)
        if family == "riemannian":
            return cls.riemannian(spec["a"], name)
        if family == "randers":
            a = spec.get("a") or np.eye(n).tolist()
            return cls.randers(a, spec["b"], name)
        if family == "conformal":
            return cls.conformal(spec["phi"], n, name)
        if family == "custom":
            return cls.custom(spec["F"], n, name)
        raise ValueError(f"unknown metric family {family!r}")

    def to_spec(self) -> dict:
        return {"family": self.family, **self.params}


def _jsonable(v):
    return v if isinstance(v, (int, float)) else str(v)


def _require_base_only(rows, n: int, what: str) -> None:
    for row in rows:
        for v in row:
            f = as_field(v, n)
            if isinstance(f, ScalarFieldExpr) and f.depends_on_fiber:
                raise ValueError(f"{what} must depend on base coordinates only, got {f.source!r}")


def _square_field(F: Field) -> Field:
    def fn(x, y, order):
        j = F.jet(x, y, order)
        return j * j

    return DerivedField(F.dim, (), F.max_order, fn, f"square of {F.name}")


# -- jet-level building blocks ---------------------------------------------

def fiber_gradient(jet: Jet, n: int) -> Jet:
    """``(d/dy^i) f`` stacked along a new trailing tensor axis."""
    return Jet.stack([jet.diff(n + i) for i in range(n)])


def fiber_hessian(jet: Jet, n: int) -> Jet:
    rows = []
    for i in range(n):
        di = jet.diff(n + i)
        rows.append(Jet.stack([di.diff(n + j) for j in range(n)]))
    return Jet.stack(rows, axis=-2)


def metric_jet(F: FinslerMetric, x, y, order: int) -> Jet:
    return 0.5 * fiber_hessian(F.F2.jet(x, y, order + 2), F.dim)


def check_nondegenerate(g: np.ndarray, what: str = "metric tensor") -> None:
    ranks, s = numerical_rank(g)
    n = g.shape[-1]
    bad = ranks < n
    if np.any(bad):
        k = np.flatnonzero(np.atleast_1d(bad))[0]
        sv = s.reshape(-1, n)[k]
        raise DegenerateMetricError(f"degenerate {what} (rank {np.atleast_1d(ranks)[k]} < {n})",
                                    singular_values=sv, mask=bad)


def inverse_metric_jet(g: Jet) -> Jet:
    check_nondegenerate(g.value)
    return inverse(g)


def metric_tensor_field(F: FinslerMetric) -> DerivedField:
    return DerivedField(F.dim, (F.dim, F.dim), F.F2.max_order - 2,
                        lambda x, y, order: metric_jet(F, x, y, order), f"g of {F.name}")


def angular_jet(F: FinslerMetric, x, y, order: int) -> Jet:
    """``h_ij = g_ij - l_i l_j`` as a jet."""
    g = metric_jet(F, x, y, order)
    ell = fiber_gradient(F.F.jet(x, y, order + 1), F.dim)
    return g - expand(ell, 1) * ell[..., None, :]


def angular_metric_field(F: FinslerMetric) -> DerivedField:
    return DerivedField(F.dim, (F.dim, F.dim), min(F.F2.max_order - 2, F.F.max_order - 1),
                        lambda x, y, order: angular_jet(F, x, y, order), f"h of {F.name}")


def fiber_hessian_field(f: Field, name: str | None = None) -> DerivedField:
    return DerivedField(f.dim, (f.dim, f.dim), f.max_order - 2,
                        lambda x, y, order: fiber_hessian(f.jet(x, y, order + 2), f.dim),
                        name or f"fiber Hessian of {f.name}")


def fiber_gradient_field(f: Field, name: str | None = None) -> DerivedField:
    return DerivedField(f.dim, (f.dim,), f.max_order - 1,
                        lambda x, y, order: fiber_gradient(f.jet(x, y, order + 1), f.dim),
                        name or f"fiber gradient of {f.name}")


# -- point operations ---------------------------------------------------------

def _arrays(p: FiberPoint):
    return np.asarray(p.x, float), np.asarray(p.y, float)


def metric_tensor(F: FinslerMetric, p: FiberPoint) -> TensorValue:
    x, y = _arrays(p)
    g = metric_jet(F, x, y, 0).value
    g = 0.5 * (g + g.T)
    check_nondegenerate(g)
    return TensorValue((0, 2), g, p, inverse=np.linalg.inv(g))


def angular_metric(F: FinslerMetric, p: FiberPoint) -> TensorValue:
    x, y = _arrays(p)
    h1 = angular_jet(F, x, y, 0).value
    Fj = F.F.jet(x, y, 2)
    h2 = Fj.value * fiber_hessian(Fj, F.dim).value
    scale = 1.0 + np.max(np.abs(h1))
    if np.max(np.abs(h1 - h2)) > 1e-10 * scale:
        raise ConsistencyError(f"angular metric formulas disagree by {np.max(np.abs(h1 - h2)):.3g}")
    if np.max(np.abs(h2 @ y)) > 1e-10 * scale * (1 + np.linalg.norm(y)):
        raise ConsistencyError(f"h y = {h2 @ y} is not zero")
    return TensorValue((0, 2), h2, p)


@dataclass
class RegularityReport:
    rank_g: np.ndarray
    rank_h: np.ndarray
    singular_values_g: np.ndarray

    @property
    def passed(self) -> bool:
        n = self.singular_values_g.shape[-1]
        return bool(np.all(self.rank_g == n) and np.all(self.rank_h == n - 1))

    def to_dict(self) -> dict:
        return {
            "verdict": self.passed,
            "rank_g": self.rank_g.tolist(),
            "rank_h": self.rank_h.tolist(),
        }


def regularity_report(F: FinslerMetric, samples: SampleSet, jobs: int = 1) -> RegularityReport:
    x, y = samples.x, samples.y

    def fn(xc, yc):
        Fj = F.F.jet(xc, yc, 2)
        g = metric_jet(F, xc, yc, 0).value
        h = Fj.value[:, None, None] * fiber_hessian(Fj, F.dim).value
        rg, s = numerical_rank(g)
        rh, _ = numerical_rank(h)
        return rg, rh, s

    try:
        rg, rh, s = map_points(fn, x, y, jobs)
    except DomainError as exc:
        raise locate_domain_error(exc, x, y) from exc
    return RegularityReport(rg, rh, s)


def geodesic_spray_jet(F: FinslerMetric, x, y, order: int) -> Jet:
    """``G^i = 1/4 g^ik (y^h d2F2/dy^k dx^h - dF2/dx^k)`` as a jet."""
    n = F.dim
    J = F.F2.jet(x, y, order + 2)
    g = 0.5 * fiber_hessian(J, n)
    ginv = inverse_metric_jet(g)
    yv = fiber_vector_jet(y, order)
    mixed = []
    for k in range(n):
        dk = J.diff(n + k)
        total = None
        for h in range(n):
            term = dk.diff(h) * yv[..., h]
            total = term if total is None else total + term
        mixed.append(total)
    gradx = Jet.stack([J.diff(k).truncate(order) for k in range(n)])
    rhs = Jet.stack(mixed) - gradx
    return 0.25 * einsum("...ik,...k->...i", ginv, rhs)


def geodesic_spray(F: FinslerMetric) -> Spray:
    field_ = DerivedField(F.dim, (F.dim,), F.F2.max_order - 2,
                          lambda x, y, order: geodesic_spray_jet(F, x, y, order),
                          f"geodesic spray coefficients of {F.name}")
    return Spray(field_, name=f"geodesic({F.name})")
