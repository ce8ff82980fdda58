"""Numerical residual checks for Finsler, projective and gyroscopic metrizability of sprays."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateMetricError,
    DepthBudgetError,
    DerivativeOrderError,
    DomainError,
    ExprSyntaxError,
    FinslerCheckError,
    IndexOutOfRangeError,
    ScenarioError,
    UnknownSymbolError,
)
from .expr import MultiIndex, ScalarFieldExpr, eval_derivative, finite_difference_oracle, parse_expression  # noqa: E402
from .geometry import FiberPoint, SampleConfig, SampleSet, Spray, homogeneity_residual, sample_points, validate_spray  # noqa: E402
from .metrics import FinslerMetric, TensorValue, angular_metric, geodesic_spray, metric_tensor, regularity_report  # noqa: E402
from .connection import (  # noqa: E402
    TensorField,
    connection_coefficients,
    dynamical_covariant_derivative,
    horizontal_derivative,
)
from .metrizability import (  # noqa: E402
    MetrizabilityVerdict,
    angular_invariance_residual,
    euler_lagrange_form,
    fm_residual,
    hamel_residual,
    split_residual,
    make_gyroscopic_spray,
    make_projective_deformation,
    pm_levicivita_residual,
    recover_gyroscopic_form,
    recover_projective_factor,
)
from .first_integrals import (  # noqa: E402
    characteristic_coefficients,
    first_integral_drift,
    h_tensor,
    integrate_geodesic,
    integrate_geodesics,
    nabla_H_residual,
)
