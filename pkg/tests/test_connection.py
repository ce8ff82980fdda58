import numpy as np
import pytest

from finslercheck import (
    FiberPoint,
    FinslerMetric,
    Spray,
    TensorField,
    connection_coefficients,
    dynamical_covariant_derivative,
    geodesic_spray,
    horizontal_derivative,
    parse_expression,
)
from finslercheck.connection import covariant_derivative_jet, nabla_field
from finslercheck.errors import DepthBudgetError
from finslercheck.expr import MultiIndex, eval_derivative
from finslercheck.fields import StackedField
from finslercheck.metrics import fiber_gradient_field, metric_tensor_field

from oracles import christoffel_spray, coordinates

RIEMANN = [["1 + 0.5*x1^2", "0.2*x2"], ["0.2*x2", "2"]]
GYRO = Spray.from_expressions(["0.3*x2*y1^2 + y1*y2", "-0.2*x1*y2^2 + 0.1*y1^2"], name="polynomial")


def riemann_oracle():
    x, _ = coordinates(2)
    return christoffel_spray([[1 + x[0] ** 2 / 2, x[1] / 5], [x[1] / 5, 2]], 2)


def test_flat_connection_vanishes(few):
    for p in few:
        assert np.all(connection_coefficients(Spray.flat(2), p).data == 0)


def test_riemannian_connection_matches_christoffel(few):
    S = geodesic_spray(FinslerMetric.riemannian(RIEMANN))
    _, N_oracle = riemann_oracle()
    for p in few:
        np.testing.assert_allclose(connection_coefficients(S, p).data, N_oracle(p.x, p.y), atol=1e-8)


@pytest.mark.parametrize("spray", [GYRO, geodesic_spray(FinslerMetric.conformal("0.5*x1 + 0.2*x2^2", 2))])
def test_connection_is_one_homogeneous(spray, few):
    for p in few:
        N1 = connection_coefficients(spray, p).data
        N2 = connection_coefficients(spray, FiberPoint(p.x, tuple(2 * v for v in p.y))).data
        assert np.abs(N2 - 2 * N1).max() <= 1e-9


def test_horizontal_derivative_examples(few, conformal):
    x1 = parse_expression("x1", 2)
    assert horizontal_derivative(x1, Spray.flat(2), few.points[0], 1) == 1.0
    S = geodesic_spray(conformal)
    for p in few:
        for i in (1, 2):
            assert abs(horizontal_derivative(conformal.F2, S, p, i)) <= 1e-12


def test_horizontal_derivative_recomposes(few):
    f = parse_expression("exp(x1)*y1^2*y2 + sin(x2)*y1^3", 2)
    for p in few:
        N = connection_coefficients(GYRO, p).data
        for i in (1, 2):
            dx = eval_derivative(f, p, MultiIndex.of(2, f"x{i}"))
            dy = [eval_derivative(f, p, MultiIndex.of(2, f"y{j}")) for j in (1, 2)]
            expected = dx - sum(N[j, i - 1] * dy[j] for j in range(2))
            assert horizontal_derivative(f, GYRO, p, i) == pytest.approx(expected, abs=1e-12)


def test_covariant_derivative_examples(few, euclidean):
    y1 = TensorField((0, 0), parse_expression("y1", 2))
    g = TensorField((0, 2), metric_tensor_field(euclidean))
    for p in few:
        assert dynamical_covariant_derivative(y1, Spray.flat(2), p).data == 0.0
        assert np.all(dynamical_covariant_derivative(g, Spray.flat(2), p).data == 0.0)


def test_trace_commutes_with_nabla(few):
    T = StackedField([[parse_expression("x1*y1", 2), parse_expression("y2^2 + x2", 2)],
                      [parse_expression("sin(x1)*y2", 2), parse_expression("exp(x2)*y1*y2", 2)]])
    tr = parse_expression("x1*y1 + exp(x2)*y1*y2", 2)
    for p in few:
        a = dynamical_covariant_derivative(TensorField((1, 1), T), GYRO, p).data
        b = dynamical_covariant_derivative(TensorField((0, 0), tr), GYRO, p).data
        assert abs(np.trace(a) - b) <= 1e-9


def test_contractions_with_y_for_geodesic_sprays(samples, conformal):
    S = geodesic_spray(conformal)
    g = TensorField((0, 2), metric_tensor_field(conformal))
    ng = covariant_derivative_jet(g, S, samples.x, samples.y, 0).value
    nF2 = covariant_derivative_jet(TensorField((0, 0), conformal.F2), S, samples.x, samples.y, 0).value
    contracted = np.einsum("...ij,...i,...j->...", ng, samples.y, samples.y)
    np.testing.assert_allclose(nF2, contracted, atol=1e-9)
    nphi = covariant_derivative_jet(TensorField((0, 1), fiber_gradient_field(conformal.F2)), S,
                                    samples.x, samples.y, 0).value
    assert np.abs(ng).max() <= 1e-9 and np.abs(nphi).max() <= 1e-9


def test_unsupported_valence():
    with pytest.raises(ValueError):
        TensorField((2, 0), StackedField([[parse_expression("1", 2)] * 2] * 2))
    with pytest.raises(ValueError):
        TensorField((0, 1), parse_expression("y1", 2))


def test_depth_budget_names_composition(conformal, few):
    S = geodesic_spray(conformal)
    g = TensorField((0, 2), metric_tensor_field(conformal))
    ng = nabla_field(g, S)
    assert ng.max_order == 0
    with pytest.raises(DepthBudgetError) as err:
        covariant_derivative_jet(TensorField((0, 2), ng), S, few.x, few.y, 0)
    assert "nabla" in str(err.value)
