"""Chart points on the slit tangent bundle, sampling, homogeneity and sprays."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm, qmc

from .errors import DomainError, SamplingError
from .expr import as_field
from .fields import DerivedField, Field, StackedField, fiber_vector_jet
from .jets import Jet, expand

DEFAULT_Y_MIN = 0.5


@dataclass(frozen=True)
class FiberPoint:
    """A point ``(x, y)`` of a chart of ``T_0 M`` with ``|y| >= y_min``."""

    x: tuple
    y: tuple
    y_min: float = field(default=DEFAULT_Y_MIN, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        if len(self.x) != len(self.y) or not self.x:
            raise SamplingError("x and y must be non-empty and of equal length")
        if not self.y_min > 0:
            raise SamplingError(f"y_min must be positive, got {self.y_min}")
        if np.linalg.norm(self.y) < self.y_min:
            raise SamplingError(
                f"|y| = {np.linalg.norm(self.y):.3g} < y_min = {self.y_min}: point is too close to the zero section"
            )

    @property
    def dimension(self) -> int:
        return len(self.x)

    def arrays(self):
        return np.array(self.x), np.array(self.y)

    def scaled(self, lam: float) -> "FiberPoint":
        y = tuple(lam * v for v in self.y)
        return FiberPoint(self.x, y, y_min=min(self.y_min, float(np.linalg.norm(y))))


@dataclass(frozen=True)
class SampleConfig:
    seed: int = 0
    count: int = 200
    box: tuple = ((-1.0, 1.0), (-1.0, 1.0))
    shell: tuple = (0.5, 2.0)
    y_min: float = DEFAULT_Y_MIN

    def __post_init__(self):
        object.__setattr__(self, "box", tuple((float(a), float(b)) for a, b in self.box))
        object.__setattr__(self, "shell", (float(self.shell[0]), float(self.shell[1])))

    @property
    def dimension(self) -> int:
        return len(self.box)

    @classmethod
    def cube(cls, dimension: int, half_width: float = 1.0, **kw) -> "SampleConfig":
        return cls(box=((-half_width, half_width),) * dimension, **kw)


@dataclass(frozen=True)
class SampleSet:
    config: SampleConfig
    points: tuple

    @property
    def x(self) -> np.ndarray:
        return np.array([p.x for p in self.points]).reshape(len(self.points), self.config.dimension)

    @property
    def y(self) -> np.ndarray:
        return np.array([p.y for p in self.points]).reshape(len(self.points), self.config.dimension)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def sample_points(config: SampleConfig | None = None, **kw) -> SampleSet:
    """Deterministic scrambled-Halton samples of the base box times a fiber shell.

    Fiber directions come from Gaussian-transformed Halton coordinates
    (uniform on the sphere), radii are uniform in ``shell``.
    """
    if config is None:
        config = SampleConfig(**kw)
    elif kw:
        raise TypeError("pass either a SampleConfig or keyword arguments")
    n = config.dimension
    if config.count < 1:
        raise SamplingError(f"count must be at least 1, got {config.count}")
    if n < 1:
        raise SamplingError("base box has no coordinates")
    for i, (lo, hi) in enumerate(config.box):
        if not lo <= hi:
            raise SamplingError(f"base box interval {i + 1} is empty: [{lo}, {hi}]")
    r_lo, r_hi = config.shell
    if r_lo <= 0:
        raise SamplingError(f"fiber shell lower radius must be positive, got {r_lo}")
    if r_hi < r_lo:
        raise SamplingError(f"fiber shell is empty: [{r_lo}, {r_hi}]")
    if r_lo < config.y_min:
        raise SamplingError(f"fiber shell lower radius {r_lo} is below y_min {config.y_min}")

    u = qmc.Halton(d=2 * n + 1, scramble=True, rng=np.random.default_rng(config.seed)).random(config.count)
    u = np.clip(u, 1e-12, 1 - 1e-12)
    lo = np.array([b[0] for b in config.box])
    hi = np.array([b[1] for b in config.box])
    x = lo + u[:, :n] * (hi - lo)
    g = norm.ppf(u[:, n: 2 * n])
    direction = g / np.linalg.norm(g, axis=1, keepdims=True)
    radius = r_lo + u[:, 2 * n] * (r_hi - r_lo)
    y = direction * radius[:, None]
    points = tuple(FiberPoint(tuple(xi), tuple(yi), y_min=config.y_min) for xi, yi in zip(x, y))
    return SampleSet(config, points)


def map_points(fn, x, y, jobs: int = 1):
    """Apply a batched ``fn(x, y)`` to chunks of points, concatenating in index order."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if jobs <= 1 or len(x) < 2 * jobs:
        return fn(x, y)
    chunks = np.array_split(np.arange(len(x)), jobs)

    def run(idx):
        try:
            return fn(x[idx], y[idx])
        except DomainError as exc:
            if exc.point is not None:
                raise
            raise locate_domain_error(exc, x[idx], y[idx], offset=int(idx[0])) from exc

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(run, chunks))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p, axis=0) for p in zip(*parts))
    return np.concatenate(parts, axis=0)


def _fmt(v) -> str:
    return "(" + ", ".join(f"{float(c):.12g}" for c in v) + ")"


def locate_domain_error(exc: DomainError, x, y, offset: int = 0) -> DomainError:
    """Attach the first offending sample point to a batched domain error.

    ``offset`` is the index of ``x[0]`` in the full sample set.
    """
    if exc.point is not None:
        return exc
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    k = 0
    if exc.mask is not None and exc.mask.ndim >= 1 and exc.mask.shape[0] == len(x):
        bad = np.flatnonzero(exc.mask.reshape(len(x), -1).any(axis=1))
        k = int(bad[0]) if bad.size else 0
    point = f"x={_fmt(x[k])}, y={_fmt(y[k])} (sample {k + offset})"
    return DomainError(str(exc), mask=exc.mask, point=point)


def fiber_euler(jet: Jet, y) -> Jet:
    """``y^i d/dy^i`` of a jet (one order lower)."""
    y = np.asarray(y, float)
    n = y.shape[-1]
    extra = len(jet.shape) - (y.ndim - 1)
    yv = fiber_vector_jet(y, jet.order - 1)
    total = None
    for i in range(n):
        term = jet.diff(n + i) * expand(yv[..., i], extra)
        total = term if total is None else total + term
    return total


def homogeneity_residuals(f: Field, degree: float, x, y) -> np.ndarray:
    """Batched ``y^i df/dy^i - k f`` for scalar or tensor fields."""
    jet = f.jet(x, y, 1)
    return (fiber_euler(jet, y) - degree * jet.truncate(0)).value


def homogeneity_residual(f: Field, degree: int, p: FiberPoint) -> float:
    if degree == 0:
        raise ValueError("degree must be non-zero")
    x, y = p.arrays()
    return float(homogeneity_residuals(f, degree, x, y))


class Spray:
    """A spray ``S = y^i d/dx^i - 2 G^i d/dy^i`` given by its coefficients ``G^i``.

    Storing only ``G`` builds in the second-order condition ``JS = C``; the
    2-homogeneity ``[C, S] = S`` is checked by :func:`validate_spray`.
    """

    def __init__(self, coefficients: Field, name: str = "spray"):
        if len(coefficients.shape) != 1:
            raise ValueError(f"spray coefficients must be a vector field, got shape {coefficients.shape}")
        self.coefficients = coefficients
        self.dim = coefficients.dim
        if coefficients.shape[0] != self.dim:
            raise ValueError("need one coefficient per coordinate")
        self.name = name

    def __repr__(self) -> str:
        return f"Spray({self.name!r}, dim={self.dim})"

    @property
    def max_order(self) -> int:
        return self.coefficients.max_order

    def jet(self, x, y, order: int) -> Jet:
        return self.coefficients.jet(x, y, order)

    def values(self, x, y) -> np.ndarray:
        return self.coefficients.values(x, y)

    @classmethod
    def from_expressions(cls, coefficients: Sequence, dimension: int | None = None, name: str = "spray") -> "Spray":
        dimension = dimension or len(coefficients)
        comps = [as_field(c, dimension) for c in coefficients]
        return cls(StackedField(comps, name=f"{name} coefficients"), name=name)

    @classmethod
    def flat(cls, dimension: int) -> "Spray":
        return cls.from_expressions(["0"] * dimension, dimension, name="flat")

    def with_coefficients(self, fn, max_order: int, name: str) -> "Spray":
        return Spray(DerivedField(self.dim, (self.dim,), max_order, fn, f"{name} coefficients"), name=name)


@dataclass
class ResidualReport:
    name: str
    tolerance: float
    per_point: np.ndarray
    details: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return float(np.max(self.per_point)) if len(self.per_point) else 0.0

    @property
    def mean_residual(self) -> float:
        return float(np.mean(self.per_point)) if len(self.per_point) else 0.0

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "tolerance": self.tolerance,
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "verdict": self.passed,
            "per_point": [float(v) for v in self.per_point],
            "details": self.details,
        }


def per_point_max(values) -> np.ndarray:
    values = np.asarray(values)
    return np.abs(values).reshape(len(values), -1).max(axis=1)


def validate_spray(S: Spray, samples: SampleSet, tol: float = 1e-8, jobs: int = 1) -> ResidualReport:
    x, y = samples.x, samples.y

    def residuals(xc, yc):
        return per_point_max(homogeneity_residuals(S.coefficients, 2, xc, yc))

    try:
        per = map_points(residuals, x, y, jobs)
    except DomainError as exc:
        raise locate_domain_error(exc, x, y) from exc
    return ResidualReport(f"spray 2-homogeneity ({S.name})", tol, per)
