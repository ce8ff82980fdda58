import warnings

import numpy as np
import pytest

from finslercheck import (
    FiberPoint,
    FinslerMetric,
    SampleConfig,
    Spray,
    geodesic_spray,
    make_projective_deformation,
    sample_points,
)
from finslercheck.errors import DomainError
from finslercheck.first_integrals import (
    characteristic_coefficients,
    endpoint_convergence,
    first_integral_drift,
    first_integral_values,
    h_tensor,
    integrate_geodesic,
    integrate_geodesics,
    nabla_H_residual,
    scalar_names,
)


def starts(count=4, seed=11, n=2):
    return list(sample_points(SampleConfig.cube(n, half_width=0.5, seed=seed, count=count)))


def test_h_tensor_euclidean_pair(euclidean):
    H = h_tensor(euclidean, euclidean, FiberPoint((0.2, -0.4), (1.0, 0.0)))
    np.testing.assert_allclose(H.data, [[0, 0], [0, 1]], atol=1e-15)
    assert H.valence == (1, 1)


@pytest.mark.parametrize("pair", ["euclidean", "randers", "conformal", "mixed"])
def test_h_annihilates_y_and_has_trace_n_minus_one(pair, euclidean, randers, conformal, few):
    F, Ft = {"euclidean": (euclidean, euclidean), "randers": (randers, randers),
             "conformal": (conformal, conformal), "mixed": (euclidean, randers)}[pair]
    for p in few:
        H = h_tensor(F, Ft, p).data
        assert np.abs(H @ np.array(p.y)).max() <= 1e-12
        if F is Ft:
            assert np.trace(H) == pytest.approx(1.0, abs=1e-12)


def test_h_trace_in_three_dimensions(samples3):
    F = FinslerMetric.randers(np.eye(3).tolist(), [0.3, -0.2, 0.1])
    vals, _, hy = first_integral_values(F, F, samples3.x, samples3.y)
    np.testing.assert_allclose(vals["tr_H"], 2.0, atol=1e-12)
    assert hy <= 1e-12


def test_characteristic_examples():
    ch = characteristic_coefficients(np.diag([2.0, 3.0]))
    np.testing.assert_allclose(ch.coefficients, [5.0, 6.0])
    np.testing.assert_allclose(ch.eigenvalues, [2.0, 3.0])
    assert not ch.complex
    ch = characteristic_coefficients(np.eye(3))
    np.testing.assert_allclose(ch.coefficients, [3.0, 3.0, 1.0])


def test_characteristic_matches_closed_form_2x2():
    A = np.random.default_rng(7).normal(size=(100, 2, 2))
    ch = characteristic_coefficients(A)
    np.testing.assert_allclose(ch.coefficients[:, 0], np.trace(A, axis1=1, axis2=2), atol=1e-12)
    np.testing.assert_allclose(ch.coefficients[:, 1], np.linalg.det(A), atol=1e-12)


def test_characteristic_matches_numpy_poly():
    A = np.random.default_rng(8).normal(size=(30, 4, 4))
    ch = characteristic_coefficients(A)
    for a, c in zip(A, ch.coefficients):
        poly = np.poly(a)  # x^n + p1 x^(n-1) + ... ; e_k = (-1)^k p_k
        np.testing.assert_allclose(c, [(-1) ** k * poly[k] for k in range(1, 5)], atol=1e-10)


def test_characteristic_complex_flag():
    ch = characteristic_coefficients(np.array([[0.0, -1.0], [1.0, 0.0]]))
    assert ch.complex
    np.testing.assert_allclose(ch.eigenvalues, [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(ch.imag, [1.0, 1.0])


def test_flat_geodesic_is_a_straight_line(euclidean):
    tr = integrate_geodesic(Spray.flat(2), FiberPoint((0.0, 0.0), (1.0, 0.0)), t_end=1.0)
    np.testing.assert_allclose(tr.x[-1], [1.0, 0.0], atol=1e-13)
    assert tr.t[0] == 0.0 and tr.t[-1] == pytest.approx(1.0)
    assert not tr.truncated and tr.error_estimate <= 1e-14
    assert tr.metadata()["method"] == "rk4"


def test_energy_conserved_along_geodesics(conformal):
    S = geodesic_spray(conformal)
    for tr in integrate_geodesics(S, starts(), h=0.01):
        E = conformal.F2.values(tr.x, tr.y)
        assert np.max(np.abs(E - E[0])) / E[0] <= 1e-6
        assert tr.error_estimate is not None and tr.error_estimate < 1e-8


def test_batched_matches_single(conformal):
    S = geodesic_spray(conformal)
    pts = starts(3)
    batch = integrate_geodesics(S, pts, t_end=0.5, h=0.01)
    for p, tr in zip(pts, batch):
        one = integrate_geodesic(S, p, t_end=0.5, h=0.01)
        np.testing.assert_array_equal(tr.x, one.x)


def test_truncation_below_y_min():
    # y' = -y decays, so |y| leaves the slit bundle's working shell
    S = Spray.from_expressions(["0.5*y1", "0.5*y2"], name="damped")
    tr = integrate_geodesic(S, FiberPoint((0, 0), (1.0, 0.0)), t_end=2.0, h=0.01)
    assert tr.truncated and "y_min" in tr.reason
    assert np.linalg.norm(tr.y, axis=1).min() >= 0.5
    assert tr.t[-1] < 1.0


def test_truncation_on_domain_error():
    S = Spray.from_expressions(["-0.5*y1^2/sqrt(0.5 - x1)*0", "log(0.3 - x1)*0"], name="edge")
    tr = integrate_geodesic(S, FiberPoint((0, 0), (1.0, 0.0)), t_end=1.0, h=0.01)
    assert tr.truncated and "domain" in tr.reason
    assert tr.x[-1, 0] < 0.31


def test_truncation_on_blow_up():
    # y' = 2 |y| y leaves every bounded set in finite time
    S = make_projective_deformation(Spray.flat(2), "sqrt(y1^2 + y2^2)")
    tr = integrate_geodesic(S, FiberPoint((0, 0), (2.0, 0.0)), t_end=1.0, h=0.01)
    assert tr.truncated and "blew up" in tr.reason
    assert np.isfinite(tr.y).all() and tr.t[-1] < 0.3


def test_grid_rejects_bad_steps():
    with pytest.raises(ValueError):
        integrate_geodesic(Spray.flat(2), FiberPoint((0, 0), (1, 0)), t_end=0.0)
    with pytest.raises(ValueError):
        integrate_geodesic(Spray.flat(2), FiberPoint((0, 0), (1, 0)), h=-1.0)


def test_rk4_is_fourth_order(conformal):
    res = endpoint_convergence(geodesic_spray(conformal), FiberPoint((0.1, 0.2), (1.0, 0.5)), h=0.1)
    assert 3.8 <= res["observed_order"] <= 4.2


def test_endpoint_convergence_reports_truncation():
    S = Spray.from_expressions(["0.5*y1", "0.5*y2"], name="damped")
    with pytest.raises(DomainError):
        endpoint_convergence(S, FiberPoint((0, 0), (1.0, 0.0)), t_end=3.0)


def test_drift_vanishes_for_projectively_related_pair(euclidean, randers):
    S = Spray.flat(2)
    for tr in integrate_geodesics(S, starts(), h=0.01):
        series = first_integral_drift(S, euclidean, randers, tr)
        assert series.invariant_drift <= 1e-9
        assert series.hy_max <= 1e-12
        assert max(series.hypotheses.values()) <= 1e-7


@pytest.mark.parametrize("P", ["0.2*y1 - 0.1*y2", "-0.1*sqrt(y1^2 + y2^2)"])
def test_reparametrized_flat_geodesics_keep_H_but_not_g(P, euclidean, randers):
    """Projective deformations only rescale y, and H is 0-homogeneous in y."""
    S = make_projective_deformation(Spray.flat(2), P)
    for tr in integrate_geodesics(S, starts(2), h=0.01):
        with pytest.warns(RuntimeWarning, match="invariance hypotheses"):
            series = first_integral_drift(S, euclidean, randers, tr)
        assert series.invariant_drift <= 1e-9
        assert series.hypotheses["nabla_g_max"] > 1e-3
        assert series.hypotheses["angular_invariance_max"] <= 1e-9


def test_drift_along_conformal_geodesics_is_nontrivial(euclidean, conformal):
    """Flat-sphere pair is not parallel along conformal geodesics, so H moves."""
    S = geodesic_spray(conformal)
    tr = integrate_geodesic(S, FiberPoint((0.0, 0.5), (1.0, 0.5)), h=0.01)
    with pytest.warns(RuntimeWarning, match="invariance hypotheses"):
        series = first_integral_drift(S, conformal, FinslerMetric.randers([[1, 0], [0, 1]], ["0.3*x2^2", "0"]), tr)
    assert series.invariant_drift > 1e-3


def test_energy_drift_excluded_from_invariant_drift(euclidean):
    tr = integrate_geodesic(Spray.flat(2), FiberPoint((0, 0), (1, 0)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        series = first_integral_drift(Spray.flat(2), euclidean, euclidean, tr)
    assert set(series.drift) == set(scalar_names(2))
    assert series.drift["F2"] == 0.0 and series.invariant_drift == 0.0


def test_empty_trajectory_series(euclidean):
    from finslercheck.first_integrals import Trajectory
    tr = Trajectory(np.zeros(0), np.zeros((0, 2)), np.zeros((0, 2)))
    series = first_integral_drift(Spray.flat(2), euclidean, euclidean, tr)
    assert len(series) == 0 and series.invariant_drift == 0.0


def test_eigen_continuity_structure(euclidean, randers):
    S = Spray.flat(2)
    tr = integrate_geodesic(S, FiberPoint((0.1, 0.1), (0.6, 0.8)))
    ec = first_integral_drift(S, euclidean, randers, tr).eigen_continuity()
    assert set(ec) == {"eigen_max_jump", "coefficient_max_jump", "crossing", "min_gap"}
    assert ec["crossing"] is False and ec["min_gap"] > 0


def test_nabla_H_examples(euclidean, randers, conformal, samples):
    flat = Spray.flat(2)
    assert nabla_H_residual(flat, euclidean, randers, samples).passed
    D = make_projective_deformation(flat, "sqrt(y1^2 + y2^2)")
    assert nabla_H_residual(D, euclidean, randers, samples).passed
    rep = nabla_H_residual(geodesic_spray(conformal), conformal, conformal, samples, jobs=2)
    assert rep.passed and rep.max_residual <= 1e-9
    bad = nabla_H_residual(geodesic_spray(conformal), conformal,
                           FinslerMetric.randers([[1, 0], [0, 1]], ["0.3*x2^2", "0"]), samples)
    assert not bad.passed
