import numpy as np
import pytest

from finslercheck import (
    DomainError,
    FiberPoint,
    FinslerMetric,
    SampleConfig,
    Spray,
    geodesic_spray,
    homogeneity_residual,
    parse_expression,
    sample_points,
    validate_spray,
)
from finslercheck.errors import SamplingError


def test_sampling_is_deterministic():
    cfg = SampleConfig(seed=7, count=3)
    a, b = sample_points(cfg), sample_points(cfg)
    assert a.points == b.points
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert sample_points(SampleConfig(seed=8, count=3)).points != a.points


def test_samples_respect_box_and_shell(samples):
    r = np.linalg.norm(samples.y, axis=1)
    assert r.min() >= 0.5 and r.max() <= 2.0
    assert np.all(np.abs(samples.x) <= 1.0)


@pytest.mark.parametrize("kw", [
    {"count": 0},
    {"shell": (0.0, 2.0), "y_min": 0.1},
    {"shell": (-1.0, 2.0)},
    {"shell": (1.0, 0.7)},
    {"box": ((1.0, -1.0), (-1.0, 1.0))},
    {"shell": (0.2, 2.0)},
])
def test_invalid_sampling_configs(kw):
    with pytest.raises(SamplingError):
        sample_points(SampleConfig(**kw))


def test_fiber_point_rejects_zero_section():
    with pytest.raises(SamplingError):
        FiberPoint((0, 0), (0.1, 0.1))
    assert FiberPoint((0, 0), (0.1, 0.1), y_min=0.1).dimension == 2


def test_homogeneity_examples(euclidean):
    p = FiberPoint((0.3, -0.2), (1.2, 0.4))
    assert homogeneity_residual(euclidean.F, 1, p) == pytest.approx(0, abs=1e-15)
    assert homogeneity_residual(euclidean.F2, 2, p) == pytest.approx(0, abs=1e-15)
    f = parse_expression("y1 + x1", 2)
    assert homogeneity_residual(f, 1, p) == pytest.approx(-0.3, abs=1e-15)
    with pytest.raises(ValueError):
        homogeneity_residual(f, 0, p)


def test_validate_spray_examples(samples):
    assert validate_spray(Spray.flat(2), samples).max_residual == 0.0
    assert validate_spray(Spray.from_expressions(["y1^2", "0"]), samples).passed
    rep = validate_spray(Spray.from_expressions(["y1", "0"]), samples)
    assert not rep.passed
    np.testing.assert_allclose(rep.per_point, np.abs(samples.y[:, 0]), rtol=1e-14)


def test_validate_spray_reports_offending_point():
    S = Spray.from_expressions(["sqrt(x1)*y1^2", "0"])
    s = sample_points(SampleConfig(seed=1, count=50))
    with pytest.raises(DomainError) as err:
        validate_spray(S, s)
    assert "sample" in str(err.value) and "x=" in str(err.value)
    with pytest.raises(DomainError) as err4:
        validate_spray(S, s, jobs=4)
    assert str(err4.value) == str(err.value)


def test_parallel_map_matches_serial(conformal, samples):
    S = geodesic_spray(conformal)
    a = validate_spray(S, samples, jobs=1).per_point
    b = validate_spray(S, samples, jobs=3).per_point
    np.testing.assert_array_equal(a, b)


def test_family_homogeneity_invariants(samples):
    for F in (FinslerMetric.euclidean(2), FinslerMetric.randers([[1, 0], [0, 1]], [0.5, 0]),
              FinslerMetric.conformal("0.5*x1", 2)):
        for p in list(samples)[:40]:
            assert abs(homogeneity_residual(F.F, 1, p)) <= 1e-9
            assert abs(homogeneity_residual(F.F2, 2, p)) <= 1e-9
