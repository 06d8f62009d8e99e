"""Numerical calculus on Carnot groups and sharp weighted Hardy quotients."""

from ._version import __version__
from .groups import (
    CheckResult,
    DilationWeights,
    GroupSpec,
    HTypeStructure,
    HTypeValidation,
    Point,
    Poly,
    VectorField,
    abelian,
    ball_volume,
    builtin_group,
    builtin_names,
    dilate,
    folland_constant,
    fundamental_solution,
    heisenberg,
    homogeneous_norm,
    htype_group,
    inverse,
    load_group,
    multiply,
    norm_annulus_domain,
    norm_ball_box,
    quaternionic_h1,
    run_group_axiom_battery,
    validate_htype,
)
from .diffops import (
    BumpField,
    ComposedField,
    Jet2,
    NormField,
    PolynomialField,
    PowerField,
    ProductField,
    RadialProfile,
    ScalarField,
    delta_norm_power,
    expand_gradient_identity,
    horizontal_gradient,
    horizontal_gradient_sq,
    norm_gradient_sq_closed,
    power_log_profile,
    power_profile,
    radial_apply,
    run_identity_battery,
    sin_log_bump,
    sub_laplacian,
)
from .integrate import (
    Domain,
    IntegrationResult,
    QuadratureConfig,
    RadialGrid,
    integrate,
    integrate_many,
    radial_reduce,
)
from .hardy import (
    BatteryReport,
    DegenerateTestFunctionError,
    HardyProblem,
    HardyReport,
    InequalityViolation,
    NormCertification,
    SweepResult,
    TestFunction,
    UncertaintyReport,
    certify_norm,
    dirac_normalization,
    fundamental_normalization,
    mixed_quadratic_norm,
    optimal_beta,
    random_bump,
    rayleigh_quotient,
    run_inequality_battery,
    sharp_constant,
    sharpness_sweep,
    sin_test_function,
    skewed_quartic_norm,
    uncertainty_check,
)

__all__ = [name for name in dir() if not name.startswith("_")]
