"""Spectral Galerkin simulator for periodic Navier-Stokes with Gaussian
random initial data, plus a Monte Carlo verification harness for the
structural claims of the construction (drift orthogonality, Gaussian
divergence, measure invariance, heat-semigroup pushforward)."""

from .field import (
    GridSpec,
    Layout,
    SpectralField,
    divergence_residual,
    from_json,
    get_layout,
    heat_semigroup,
    inner_product_r,
    orthonormal_gram,
    sobolev_norm_sq,
    synthesize,
    to_json,
    unscale_semigroup,
)
from .flow import (
    FlowError,
    Trajectory,
    euler_mode,
    export_trajectory_csv,
    export_trajectory_sidecar,
    integrate_batch,
    integrate_physical_etd1,
    integrate_tilde,
    mild_residual,
    strong_residual,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .lattice import (
    WaveVector,
    build_frame,
    enumerate_wavevectors,
    in_half_lattice,
    lambda_mean,
    lambda_minus,
    lambda_plus,
    project_perp,
    signed_difference,
)
from .measure import (
    AdmissibilityError,
    MeasureSpec,
    RngStream,
    expected_pushforward_sq_norm,
    expected_sq_norm,
    log_density,
    sample,
    sample_batch,
)
from .nonlinear import (
    DriftEvaluation,
    b_oracle,
    b_tilde,
    b_truncated,
    build_term_table,
    convention_constants,
    drift_state_inner,
    frame_independence_residual,
    gaussian_divergence,
    series_partial_sums,
)
from .verify import (
    Observable,
    VerificationReport,
    default_observables,
    divergence_sweep,
    invariance_test,
    make_observable,
    pushforward_test,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError", "DriftEvaluation", "FlowError", "GridSpec",
    "KERNEL_BACKEND", "Layout", "MeasureSpec", "Observable", "RngStream",
    "SpectralField", "Trajectory", "VerificationReport", "WaveVector",
    "b_oracle", "b_tilde", "b_truncated", "build_frame", "build_term_table",
    "convention_constants", "default_observables", "divergence_residual",
    "divergence_sweep", "drift_state_inner", "enumerate_wavevectors",
    "euler_mode", "expected_pushforward_sq_norm", "expected_sq_norm",
    "export_trajectory_csv", "export_trajectory_sidecar",
    "frame_independence_residual", "from_json", "gaussian_divergence",
    "get_layout", "heat_semigroup", "in_half_lattice", "inner_product_r",
    "integrate_batch", "integrate_physical_etd1", "integrate_tilde",
    "invariance_test", "lambda_mean", "lambda_minus", "lambda_plus",
    "log_density", "make_observable", "mild_residual", "orthonormal_gram",
    "project_perp", "pushforward_test", "sample", "sample_batch",
    "series_partial_sums", "signed_difference", "sobolev_norm_sq",
    "strong_residual", "synthesize", "to_json", "unscale_semigroup",
]
