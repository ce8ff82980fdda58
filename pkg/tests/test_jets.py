import numpy as np
import pytest

from finslercheck.errors import DomainError
from finslercheck.jets import Jet, einsum, inverse, layout


def var(values, k, nvars=2, order=3):
    return Jet.variable(np.asarray(values, float), k, nvars, order)


def test_layout_is_degree_major():
    lay = layout(2, 3)
    degrees = [sum(m) for m in lay.monomials]
    assert degrees == sorted(degrees)
    assert lay.size == 10


def test_product_rule_and_truncation():
    a, b = var([0.7], 0), var([1.3], 1)
    p = a * a * b
    assert p.derivative((2, 1)) == pytest.approx(2.0)
    assert p.derivative((1, 1)) == pytest.approx(2 * 0.7)
    assert p.truncate(1).order == 1
    np.testing.assert_allclose(p.truncate(1).c, p.c[..., :3])


def test_univariate_functions_against_closed_forms():
    t = 0.4
    a = var([t], 0, nvars=1)
    for fn, derivs in [
        (Jet.exp, [np.exp(t)] * 4),
        (Jet.sin, [np.sin(t), np.cos(t), -np.sin(t), -np.cos(t)]),
        (Jet.log, [np.log(t), 1 / t, -1 / t ** 2, 2 / t ** 3]),
        (Jet.sqrt, [t ** 0.5, 0.5 * t ** -0.5, -0.25 * t ** -1.5, 0.375 * t ** -2.5]),
    ]:
        j = fn(a)
        for k, d in enumerate(derivs):
            assert j.derivative((k,)) == pytest.approx(d, rel=1e-13)


def test_diff_commutes():
    x, y = var([0.3], 0), var([0.8], 1)
    f = (x * y.sqrt()).exp() / (1 + x * x)
    np.testing.assert_allclose(f.diff(0).diff(1).c, f.diff(1).diff(0).c, rtol=1e-14, atol=1e-15)


def test_matrix_inverse_jet():
    x = var([0.3], 0)
    m = Jet.stack([Jet.stack([1 + x * x, x]), Jet.stack([x, 2 + x])], axis=-2)
    inv = inverse(m)
    eye = einsum("...ij,...jk->...ik", m, inv)
    np.testing.assert_allclose(eye.c[..., 0], np.eye(2)[None], atol=1e-14)
    np.testing.assert_allclose(eye.c[..., 1:], 0.0, atol=1e-13)


def test_domain_error_carries_mask():
    a = var([1.0, -1.0, 2.0], 0)
    with pytest.raises(DomainError) as err:
        a.sqrt()
    np.testing.assert_array_equal(err.value.mask, [False, True, False])
