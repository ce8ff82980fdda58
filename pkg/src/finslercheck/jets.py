"""Truncated multivariate Taylor jets (forward-mode differentiation to order 3).

A :class:`Jet` stores the Taylor coefficients ``c_a = (d^a f)(p) / a!`` of a
function of ``m`` variables for every multi-index ``a`` with ``|a| <= order``.
Coefficients live on the last array axis; every leading axis is a batch or
tensor axis and broadcasts like numpy.

Monomials are ordered degree-major, so the jet of order ``d'`` is a prefix of
the jet of order ``d > d'``.  Differentiating once shifts the coefficients and
lowers the order by one, which is how derived fields (a spray built from
second derivatives of a metric, say) remain differentiable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError

MAX_ORDER = 3


@dataclass(frozen=True, eq=False)
class JetLayout:
    nvars: int
    order: int
    monomials: tuple
    index: dict
    factorials: np.ndarray
    mul_left: np.ndarray
    mul_right: np.ndarray
    mul_starts: np.ndarray

    @property
    def size(self) -> int:
        return len(self.monomials)

    def unit(self, var: int) -> int:
        e = [0] * self.nvars
        e[var] = 1
        return self.index[tuple(e)]


@lru_cache(maxsize=None)
def layout(nvars: int, order: int) -> JetLayout:
    monos = []
    for deg in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), deg):
            a = [0] * nvars
            for v in combo:
                a[v] += 1
            monos.append(tuple(a))
    index = {a: k for k, a in enumerate(monos)}
    fact = np.array([math.prod(math.factorial(e) for e in a) for a in monos], dtype=float)

    pairs = []
    for i, a in enumerate(monos):
        for j, b in enumerate(monos):
            if sum(a) + sum(b) <= order:
                k = index[tuple(p + q for p, q in zip(a, b))]
                pairs.append((k, i, j))
    pairs.sort()
    ks = np.array([p[0] for p in pairs])
    starts = np.searchsorted(ks, np.arange(len(monos)))
    return JetLayout(
        nvars=nvars,
        order=order,
        monomials=tuple(monos),
        index=index,
        factorials=fact,
        mul_left=np.array([p[1] for p in pairs]),
        mul_right=np.array([p[2] for p in pairs]),
        mul_starts=starts,
    )


@lru_cache(maxsize=None)
def _diff_table(nvars: int, order: int, var: int):
    # target layout is (nvars, order - 1)
    src = layout(nvars, order)
    dst = layout(nvars, order - 1)
    idx = np.empty(dst.size, dtype=int)
    scale = np.empty(dst.size)
    for k, b in enumerate(dst.monomials):
        a = list(b)
        a[var] += 1
        idx[k] = src.index[tuple(a)]
        scale[k] = a[var]
    return idx, scale


def _reduce_pairs(prod: np.ndarray, lay: JetLayout) -> np.ndarray:
    return np.add.reduceat(prod, lay.mul_starts, axis=-1)


class Jet:
    """Taylor jet with arbitrary leading (batch/tensor) shape."""

    __slots__ = ("c", "layout")
    __array_priority__ = 100

    def __init__(self, c: np.ndarray, lay: JetLayout):
        self.c = c
        self.layout = lay

    # -- construction -------------------------------------------------
    @classmethod
    def constant(cls, value, nvars: int, order: int) -> "Jet":
        lay = layout(nvars, order)
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (lay.size,))
        c[..., 0] = value
        return cls(c, lay)

    @classmethod
    def variable(cls, value, var: int, nvars: int, order: int) -> "Jet":
        jet = cls.constant(value, nvars, order)
        if order >= 1:
            jet.c[..., jet.layout.unit(var)] = 1.0
        return jet

    @classmethod
    def stack(cls, jets, axis: int = -1) -> "Jet":
        """Stack jets along a new tensor axis (``axis`` counts tensor axes only)."""
        order = min(j.order for j in jets)
        lay = layout(jets[0].nvars, order)
        cs = [j.c[..., : lay.size] for j in jets]
        cs = np.broadcast_arrays(*cs)
        ax = axis - 1 if axis < 0 else axis
        return cls(np.stack(cs, axis=ax), lay)

    # -- basic properties ---------------------------------------------
    @property
    def order(self) -> int:
        return self.layout.order

    @property
    def nvars(self) -> int:
        return self.layout.nvars

    @property
    def shape(self) -> tuple:
        return self.c.shape[:-1]

    @property
    def value(self) -> np.ndarray:
        return self.c[..., 0]

    def derivative(self, alpha) -> np.ndarray:
        """Partial derivative values for the exponent tuple ``alpha``."""
        k = self.layout.index[tuple(alpha)]
        return self.c[..., k] * self.layout.factorials[k]

    def truncate(self, order: int) -> "Jet":
        if order == self.order:
            return self
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        lay = layout(self.nvars, order)
        return Jet(self.c[..., : lay.size], lay)

    def diff(self, var: int) -> "Jet":
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        idx, scale = _diff_table(self.nvars, self.order, var)
        return Jet(self.c[..., idx] * scale, layout(self.nvars, self.order - 1))

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.c[key + (slice(None),)], self.layout)

    @property
    def T(self) -> "Jet":
        return Jet(np.swapaxes(self.c, -2, -3), self.layout)

    def sum(self, axis: int = -1) -> "Jet":
        ax = axis - 1 if axis < 0 else axis
        return Jet(self.c.sum(axis=ax), self.layout)

    def trace(self) -> "Jet":
        return Jet(np.trace(self.c, axis1=-3, axis2=-2), self.layout)

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, nvars={self.nvars}, order={self.order})"

    # -- arithmetic ---------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            order = min(self.order, other.order)
            return self.truncate(order), other.truncate(order)
        return self, other

    def __add__(self, other):
        a, b = self._coerce(other)
        if isinstance(b, Jet):
            return Jet(a.c + b.c, a.layout)
        b = np.asarray(b, dtype=float)
        shape = np.broadcast_shapes(a.shape, b.shape) + (a.layout.size,)
        c = np.broadcast_to(a.c, shape).copy()
        c[..., 0] += b
        return Jet(c, a.layout)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.layout)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self._coerce(other)
        if isinstance(b, Jet):
            lay = a.layout
            if lay.order == 0:
                return Jet(a.c * b.c, lay)
            prod = a.c[..., lay.mul_left] * b.c[..., lay.mul_right]
            return Jet(_reduce_pairs(prod, lay), lay)
        return Jet(a.c * np.asarray(b, dtype=float)[..., None], a.layout)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, exponent):
        return self.power(float(exponent))

    # -- univariate functions via Taylor composition -----------------
    def _compose(self, derivs) -> "Jet":
        """Compose a scalar function with this jet.

        ``derivs[k]`` is the k-th derivative of the function at ``self.value``.
        """
        out = np.zeros_like(self.c)
        out[..., 0] = derivs[0]
        if self.order == 0:
            return Jet(out, self.layout)
        t = Jet(self.c.copy(), self.layout)
        t.c[..., 0] = 0.0
        tk = t
        for k in range(1, self.order + 1):
            out += (np.asarray(derivs[k]) / math.factorial(k))[..., None] * tk.c
            if k < self.order:
                tk = tk * t
        return Jet(out, self.layout)

    def _domain(self, bad, what):
        if np.any(bad):
            raise DomainError(f"{what} outside its domain", mask=np.asarray(bad))

    def power(self, a: float) -> "Jet":
        u = self.value
        is_int = float(a).is_integer()
        if not is_int:
            self._domain(u <= 0, f"power {a!r} of non-positive base")
        elif a < 0:
            self._domain(u == 0, f"power {a!r} of zero")
        derivs = []
        coef = 1.0
        for k in range(self.order + 1):
            if is_int and a >= 0 and k > a:
                derivs.append(np.zeros_like(u))
            else:
                derivs.append(coef * np.power(u, a - k))
            coef *= a - k
        return self._compose(derivs)

    def reciprocal(self) -> "Jet":
        return self.power(-1.0)

    def sqrt(self) -> "Jet":
        self._domain(self.value <= 0, "sqrt argument")
        return self.power(0.5)

    def exp(self) -> "Jet":
        e = np.exp(self.value)
        return self._compose([e] * (self.order + 1))

    def log(self) -> "Jet":
        u = self.value
        self._domain(u <= 0, "log argument")
        derivs = [np.log(u), 1.0 / u, -1.0 / u**2, 2.0 / u**3][: self.order + 1]
        return self._compose(derivs)

    def sin(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        return self._compose([s, c, -s, -c][: self.order + 1])

    def cos(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        return self._compose([c, -s, -c, s][: self.order + 1])


# -- tensor helpers ------------------------------------------------------

def einsum(spec: str, a: Jet, b: Jet) -> Jet:
    """Jet-valued ``np.einsum`` over tensor axes, e.g. ``'...ij,...jk->...ik'``."""
    a, b = a._coerce(b)
    lay = a.layout
    lhs, out = spec.split("->")
    left, right = lhs.split(",")
    sub = f"{left}z,{right}z->{out}z"
    if lay.order == 0:
        return Jet(np.einsum(sub, a.c, b.c), lay)
    prod = np.einsum(sub, a.c[..., lay.mul_left], b.c[..., lay.mul_right])
    return Jet(_reduce_pairs(prod, lay), lay)


def constant_einsum(spec: str, arr: np.ndarray, b: Jet) -> Jet:
    """Contract a plain array (no jet axis) against a jet."""
    lhs, out = spec.split("->")
    left, right = lhs.split(",")
    return Jet(np.einsum(f"{left},{right}z->{out}z", arr, b.c), b.layout)


def inverse(a: Jet) -> Jet:
    """Inverse of a jet-valued square matrix (last two tensor axes).

    Uses ``(A0 + T)^-1 = sum_k (-A0^-1 T)^k A0^-1``, exact because ``T`` is
    nilpotent of degree ``order + 1``.
    """
    inv0 = np.linalg.inv(a.value)
    t = Jet(a.c.copy(), a.layout)
    t.c[..., 0] = 0.0
    b = -constant_einsum("...ij,...jk->...ik", inv0, t)
    x0 = Jet.constant(inv0, a.nvars, a.order)
    acc, term = x0, x0
    for _ in range(a.order):
        term = einsum("...ij,...jk->...ik", b, term)
        acc = acc + term
    return acc


def expand(j: Jet, ndim: int) -> Jet:
    """Append ``ndim`` singleton tensor axes so ``j`` broadcasts against tensors."""
    return j[(Ellipsis,) + (None,) * ndim] if ndim else j
