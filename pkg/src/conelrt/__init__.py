"""Likelihood-ratio testing in the Gaussian sequence model under closed
convex constraints: exact projections, Monte-Carlo conic statistics, test
calibration and power prediction, verification diagnostics, and scenario
reproduction."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .geometry import (
    ConstraintSet,
    JacobianMatrix,
    ProjectionResult,
    circular,
    fit_constrained_lasso,
    jacobian,
    k_monotone,
    l1_image,
    monotone,
    moreau_split,
    orthant,
    pava,
    poly_subspace,
    product,
    product_circular,
    project,
    project_l1_ball,
    span_of,
    subspace,
    zero_point,
)
from .conic import (
    ConicSummary,
    GammaEstimate,
    MomentEstimate,
    estimate_conic_summary,
    estimate_gamma,
    estimate_lrs_moments,
    estimate_r,
)
from .lrt import (
    NullCalibration,
    NullSpec,
    PowerPrediction,
    TestPlan,
    calibrate_null,
    counter_f,
    decide,
    delta_power,
    empirical_power,
    find_c0,
    lrs,
    orthant_closed_forms,
    point_null,
    predict_power,
    subspace_null,
    wwg_separation_check,
)
from .diagnostics import (
    BoundReport,
    DistanceReport,
    identity_checks,
    iso_jacobian_band_check,
    ks_distance,
    normal_bound_rhs,
)
from .experiments import (
    PowerCurvePoint,
    ScenarioConfig,
    emit_csv,
    emit_svg,
    load_config,
    run_scenario,
)

__version__ = "0.1.0"
