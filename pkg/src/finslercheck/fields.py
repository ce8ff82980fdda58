"""Evaluable fields on a chart of the slit tangent bundle.

Every field answers ``jet(x, y, order)`` for batched base/fiber coordinates
``x, y`` of shape ``(*batch, n)`` and returns a :class:`Jet` in the ``2n``
chart variables (``x1..xn`` first, then ``y1..yn``) whose shape is
``(*batch, *field.shape)``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DepthBudgetError
from .jets import MAX_ORDER, Jet


class Field:
    dim: int
    shape: tuple = ()
    max_order: int = MAX_ORDER
    name: str = "field"

    def jet(self, x, y, order: int) -> Jet:
        raise NotImplementedError

    def check_order(self, order: int) -> None:
        if order < 0:
            raise DepthBudgetError(f"negative derivative order {order}")
        if order > self.max_order:
            raise DepthBudgetError(
                f"{self.name} supports derivatives up to order {self.max_order}; "
                f"order {order} requested exceeds the derivative depth budget of {MAX_ORDER}"
            )

    def values(self, x, y) -> np.ndarray:
        return self.jet(x, y, 0).value


class DerivedField(Field):
    """A field computed from other fields' jets.

    ``fn(x, y, order)`` must return a jet of the requested order; ``max_order``
    is fixed by how many derivatives ``fn`` consumes from its inputs.
    """

    def __init__(self, dim: int, shape: tuple, max_order: int,
                 fn: Callable[..., Jet], name: str):
        self.dim = dim
        self.shape = tuple(shape)
        self.max_order = max_order
        self._fn = fn
        self.name = name

    def jet(self, x, y, order: int) -> Jet:
        self.check_order(order)
        return self._fn(np.asarray(x, float), np.asarray(y, float), order)

    def __repr__(self) -> str:
        return f"DerivedField({self.name!r}, shape={self.shape}, max_order={self.max_order})"


class StackedField(Field):
    """Tensor field assembled from scalar component fields given as nested lists."""

    def __init__(self, components, name: str = "stacked"):
        shape = []
        probe = components
        while isinstance(probe, (list, tuple)):
            shape.append(len(probe))
            probe = probe[0]
        arr = np.empty(tuple(shape), dtype=object)
        for idx in np.ndindex(*shape):
            item = components
            for i in idx:
                item = item[i]
            arr[idx] = item
        self.components = arr
        self.dim = probe.dim
        self.shape = arr.shape
        self.max_order = min(c.max_order for c in arr.flat)
        self.name = name

    def jet(self, x, y, order: int) -> Jet:
        self.check_order(order)
        flat = [c.jet(x, y, order) for c in self.components.flat]
        batch = np.broadcast_shapes(*(j.shape for j in flat))
        lay = flat[0].layout
        c = np.stack([np.broadcast_to(j.c, batch + (lay.size,)) for j in flat], axis=-2)
        return Jet(c.reshape(batch + self.shape + (lay.size,)), lay)


def coordinate_jets(x, y, order: int):
    """Identity jets of every chart coordinate: returns ``(xs, ys)`` lists."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = x.shape[-1]
    xs = [Jet.variable(x[..., i], i, 2 * n, order) for i in range(n)]
    ys = [Jet.variable(y[..., i], n + i, 2 * n, order) for i in range(n)]
    return xs, ys


def fiber_vector_jet(y, order: int) -> Jet:
    """Jet of the vector ``y`` itself, shape ``(*batch, n)``."""
    y = np.asarray(y, float)
    n = y.shape[-1]
    return Jet.stack([Jet.variable(y[..., i], n + i, 2 * n, order) for i in range(n)])
