"""Nonlinear connection, horizontal derivatives and the dynamical covariant derivative.

Everything is written against jets: a quantity needed at order ``k`` consumes
one more order from whatever it differentiates, so derived results can be
differentiated again as long as the inputs' depth budget allows.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .errors import DepthBudgetError, DomainError
from .fields import DerivedField, Field, fiber_vector_jet
from .geometry import FiberPoint, Spray, locate_domain_error
from .jets import Jet, einsum, expand
from .metrics import TensorValue

# Mutation hook for self-tests: flips the sign of N^i_j everywhere.
_CONNECTION_SIGN = 1.0


@contextmanager
def injected_connection_sign_error():
    global _CONNECTION_SIGN
    old = _CONNECTION_SIGN
    _CONNECTION_SIGN = -old
    try:
        yield
    finally:
        _CONNECTION_SIGN = old


def connection_from_spray_jet(G: Jet, n: int) -> Jet:
    """``N^i_j = dG^i/dy^j`` from a coefficient jet (one order lower)."""
    cols = [G.diff(n + j) for j in range(n)]
    N = Jet.stack(cols, axis=-1)
    return N * _CONNECTION_SIGN if _CONNECTION_SIGN != 1.0 else N


def connection_jet(S: Spray, x, y, order: int) -> Jet:
    return connection_from_spray_jet(S.jet(x, y, order + 1), S.dim)


def connection_coefficients(S: Spray, p: FiberPoint) -> TensorValue:
    x, y = np.asarray(p.x), np.asarray(p.y)
    try:
        N = connection_jet(S, x, y, 0).value
    except DomainError as exc:
        raise locate_domain_error(exc, x, y) from exc
    return TensorValue((1, 1), N, p)


def spray_action_jet(phi: Jet, G: Jet, y) -> Jet:
    """``S(phi) = y^i dphi/dx^i - 2 G^i dphi/dy^i`` (one order below ``phi``)."""
    y = np.asarray(y, float)
    n = y.shape[-1]
    t = len(phi.shape) - (y.ndim - 1)
    order = phi.order - 1
    G = G.truncate(order)
    yv = fiber_vector_jet(y, order)
    total = None
    for i in range(n):
        term = (phi.diff(i) * expand(yv[..., i], t)
                - 2.0 * expand(G[..., i], t) * phi.diff(n + i))
        total = term if total is None else total + term
    return total


def spray_action(S: Spray, f: Field, x, y, order: int = 0) -> Jet:
    return spray_action_jet(f.jet(x, y, order + 1), S.jet(x, y, order), y)


def horizontal_jet(f: Jet, N: Jet, n: int) -> Jet:
    """``delta f / delta x^i = df/dx^i - N^j_i df/dy^j`` stacked as the first tensor axis."""
    t = len(f.shape) - (len(N.shape) - 2)
    rows = []
    for i in range(n):
        acc = f.diff(i)
        for j in range(n):
            acc = acc - expand(N[..., j, i], t) * f.diff(n + j)
        rows.append(acc)
    return Jet.stack(rows, axis=-(t + 1))


def horizontal_derivative(f: Field, S: Spray, p: FiberPoint, i: int) -> float:
    """``delta f / delta x^i`` at ``p``; ``i`` is 1-based like the coordinates."""
    x, y = np.asarray(p.x), np.asarray(p.y)
    n = S.dim
    if not 1 <= i <= n:
        raise IndexError(f"index {i} out of range 1..{n}")
    try:
        N = connection_jet(S, x, y, 0)
        out = horizontal_jet(f.jet(x, y, 1), N, n)
    except DomainError as exc:
        raise locate_domain_error(exc, x, y) from exc
    return float(out.value[i - 1])


VALENCES = ((0, 0), (0, 1), (0, 2), (1, 1))


@dataclass
class TensorField:
    """A field together with its valence; ``(1,1)`` components are ``T[i, j] = T^i_j``."""

    valence: tuple
    field: Field

    def __post_init__(self):
        self.valence = tuple(self.valence)
        n = self.field.dim
        expected = {(0, 0): (), (0, 1): (n,), (0, 2): (n, n), (1, 1): (n, n)}
        if self.valence not in expected:
            raise ValueError(f"unsupported valence {self.valence}; supported: {VALENCES}")
        if tuple(self.field.shape) != expected[self.valence]:
            raise ValueError(f"valence {self.valence} needs component shape {expected[self.valence]}, got {self.field.shape}")

    @property
    def dim(self) -> int:
        return self.field.dim


def covariant_derivative_jet(T: TensorField, S: Spray, x, y, order: int) -> Jet:
    n = S.dim
    try:
        G = S.jet(x, y, order + 1)
        comp = T.field.jet(x, y, order + 1)
    except DepthBudgetError as exc:
        raise DepthBudgetError(f"nabla({T.field.name}) along {S.name} at order {order}: {exc}") from exc
    N = connection_from_spray_jet(G, n)
    out = spray_action_jet(comp, G, y)
    v = T.valence
    if v == (0, 0):
        return out
    if v == (0, 1):
        return out - einsum("...ki,...k->...i", N, comp)
    if v == (0, 2):
        return (out - einsum("...ki,...kj->...ij", N, comp)
                - einsum("...kj,...ik->...ij", N, comp))
    # (1, 1)
    return (out + einsum("...ik,...kj->...ij", N, comp)
            - einsum("...kj,...ik->...ij", N, comp))


def nabla_field(T: TensorField, S: Spray) -> DerivedField:
    """``nabla T`` as a field, differentiable while the budget lasts."""
    return DerivedField(T.dim, T.field.shape, min(T.field.max_order, S.max_order) - 1,
                        lambda x, y, order: covariant_derivative_jet(T, S, x, y, order),
                        f"nabla({T.field.name}) along {S.name}")


def dynamical_covariant_derivative(T: TensorField, S: Spray, p: FiberPoint) -> TensorValue:
    x, y = np.asarray(p.x), np.asarray(p.y)
    try:
        value = covariant_derivative_jet(T, S, x, y, 0).value
    except DomainError as exc:
        raise locate_domain_error(exc, x, y) from exc
    return TensorValue(T.valence, np.asarray(value), p)
