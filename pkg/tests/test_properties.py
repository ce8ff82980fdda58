"""Property tests over generated expressions, metrics and points."""

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from finslercheck import (
    FiberPoint,
    FinslerMetric,
    SampleConfig,
    geodesic_spray,
    make_gyroscopic_spray,
    parse_expression,
    recover_gyroscopic_form,
    sample_points,
)
from finslercheck.connection import connection_jet
from finslercheck.expr import BinOp, Call, MultiIndex, Neg, Num, Pow, Var, eval_derivative, to_source
from finslercheck.first_integrals import characteristic_coefficients, h_tensor
from finslercheck.geometry import homogeneity_residuals
from finslercheck.metrics import fiber_gradient_field, metric_tensor

DIM = 2

leaves = st.one_of(
    st.builds(Num, st.floats(0, 10, allow_nan=False).map(lambda v: round(v, 3))),
    st.builds(Var, st.sampled_from("xy"), st.integers(1, DIM)),
)


def _extend(children):
    return st.one_of(
        st.builds(Neg, children),
        st.builds(BinOp, st.sampled_from("+-*/"), children, children),
        st.builds(Pow, children, st.sampled_from([2.0, 3.0, -1.0, 0.5])),
        st.builds(Call, st.sampled_from(["sin", "cos", "exp", "sqrt", "log"]), children),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)

smooth_leaves = st.one_of(
    st.builds(Num, st.floats(0, 2, allow_nan=False).map(lambda v: round(v, 2))),
    st.builds(Var, st.sampled_from("xy"), st.integers(1, DIM)),
)
smooth_trees = st.recursive(
    smooth_leaves,
    lambda c: st.one_of(st.builds(BinOp, st.sampled_from("+-*"), c, c), st.builds(Neg, c),
                        st.builds(Call, st.sampled_from(["sin", "cos"]), c)),
    max_leaves=8,
)

coord = st.floats(-1, 1, allow_nan=False)
unit = st.floats(-0.4, 0.4, allow_nan=False)


@st.composite
def points(draw):
    x = (draw(coord), draw(coord))
    angle = draw(st.floats(0, 2 * np.pi))
    r = draw(st.floats(0.55, 2.0))
    return FiberPoint(x, (r * np.cos(angle), r * np.sin(angle)))


@st.composite
def randers_metrics(draw):
    """Randers metrics with small, x-dependent drift so that |b|_a < 1 on the unit box."""
    c = [draw(unit) for _ in range(4)]
    b = [f"{c[0]:.6f} + {c[1]:.6f}*x2 / 4", f"{c[2]:.6f} + {c[3]:.6f}*x1^2 / 4"]
    return FinslerMetric.randers([[1.0, 0.0], [0.0, 1.0]], b)


@given(trees)
def test_print_parse_round_trip(tree):
    text = to_source(tree)
    parsed = parse_expression(text, DIM)
    assert parsed.tree == tree
    assert to_source(parsed.tree) == text


@given(randers_metrics(), points(), st.floats(0.3, 3.0))
def test_family_homogeneity(F, p, lam):
    x, y = p.arrays()
    assert abs(F.F(x, lam * y) - lam * F.F(x, y)) <= 1e-12 * (1 + lam)
    g1, g2 = metric_tensor(F, p).data, metric_tensor(F, p.scaled(lam)).data
    np.testing.assert_allclose(g1, g2, atol=1e-10)
    assert abs(homogeneity_residuals(F.F, 1, x, y)) <= 1e-12
    assert np.abs(homogeneity_residuals(geodesic_spray(F).coefficients, 2, x, y)).max() <= 1e-10


@given(smooth_trees, points(), st.integers(0, 1), st.integers(0, 1))
def test_mixed_partials_commute(tree, p, i, j):
    f = parse_expression(to_source(tree), DIM)
    x, y = p.arrays()
    xi, yj = f"x{i + 1}", f"y{j + 1}"
    direct = eval_derivative(f, p, MultiIndex.of(DIM, xi, yj))
    # differentiate the fiber gradient field in x instead
    grad = fiber_gradient_field(f).jet(x, y, 1)
    nested = grad.diff(i).value[j]
    assert abs(direct - nested) <= 1e-10 * (1 + abs(direct))
    swapped = eval_derivative(f, p, MultiIndex.of(DIM, yj, xi))
    assert direct == swapped


@given(randers_metrics(), points(), st.floats(0.3, 3.0))
def test_connection_is_one_homogeneous(F, p, lam):
    S = geodesic_spray(F)
    x, y = p.arrays()
    N1 = connection_jet(S, x, y, 0).value
    N2 = connection_jet(S, x, lam * y, 0).value
    np.testing.assert_allclose(N2, lam * N1, atol=1e-10 * (1 + lam))


@given(st.floats(-1, 1), st.floats(-0.5, 0.5), st.integers(0, 50))
def test_recovered_form_is_skew(a, c, seed):
    F = FinslerMetric.conformal(f"{c:.6f}*x1", DIM)
    S = make_gyroscopic_spray(F, [["0", f"{a:.6f}"], [f"{-a:.6f}", "0"]])
    v = recover_gyroscopic_form(S, F, sample_points(SampleConfig(seed=seed, count=8)), fiber_count=3)
    assert v.checks["skew_symmetry_max"] <= 1e-10
    assert np.abs(v.recovered["omega"][:, 0, 1] - round(a, 6)).max() <= 1e-8


@given(randers_metrics(), randers_metrics(), points())
def test_H_annihilates_y(F, Ft, p):
    H = h_tensor(F, Ft, p).data
    assert np.abs(H @ np.array(p.y)).max() <= 1e-10


@given(randers_metrics(), points())
def test_H_trace_for_equal_metrics(F, p):
    assert abs(np.trace(h_tensor(F, F, p).data) - (DIM - 1)) <= 1e-10


@given(st.integers(1, 5), st.integers(0, 10_000))
def test_characteristic_coefficients_match_poly(n, seed):
    A = np.random.default_rng(seed).normal(size=(n, n))
    e = characteristic_coefficients(A).coefficients
    poly = np.poly(A)
    np.testing.assert_allclose(e, [(-1) ** k * poly[k] for k in range(1, n + 1)], atol=1e-9 * (1 + np.abs(poly).max()))
