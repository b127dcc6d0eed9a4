"""Simulation and cross-validation of feedback-squashed oscillator states.

A continuously monitored vibrational mode (position quadrature read out
through a damped cavity) is driven by instantaneous feedback on the homodyne
current.  The package provides the closed-form stationary Gaussian state, the
deterministic and conditioned stochastic master equations on a truncated
number basis, and the pre-elimination two-mode Gaussian model, each serving
as an independent check on the others.
"""

from .analytic import (
    ContourEllipse,
    QuadCovariance,
    StationaryGaussian,
    contour_ellipse,
    covariance,
    is_stable,
    n_eff,
    quad_variance,
    stationary_solution,
    wigner_gaussian,
)
from .evolve_det import (
    RhsSpec,
    evolve,
    moment_oracle,
    rhs_final_feedback,
    rhs_generic_feedback,
    rhs_thermal,
    steady_state,
)
from .evolve_stoch import (
    EnsembleStats,
    Trajectory,
    ensemble,
    feedback_apply,
    photocurrent,
    run_trajectory,
    sme_step,
)
from .gaussian2 import (
    TwoModeGaussian,
    TwoModePhysical,
    adiabatic_check,
    assemble_drift_diffusion,
    semiclassical_fixed_point,
    stationary_covariance,
)
from .params import (
    EffectiveBath,
    ModelParams,
    PhysicalInputs,
    check_regime,
    derive_couplings,
    effective_bath,
)

__version__ = "0.1.0"

__all__ = [
    "ModelParams",
    "PhysicalInputs",
    "EffectiveBath",
    "derive_couplings",
    "effective_bath",
    "check_regime",
    "StationaryGaussian",
    "QuadCovariance",
    "ContourEllipse",
    "stationary_solution",
    "quad_variance",
    "n_eff",
    "is_stable",
    "covariance",
    "contour_ellipse",
    "wigner_gaussian",
    "RhsSpec",
    "rhs_thermal",
    "rhs_generic_feedback",
    "rhs_final_feedback",
    "evolve",
    "steady_state",
    "moment_oracle",
    "Trajectory",
    "EnsembleStats",
    "sme_step",
    "photocurrent",
    "feedback_apply",
    "run_trajectory",
    "ensemble",
    "TwoModePhysical",
    "TwoModeGaussian",
    "semiclassical_fixed_point",
    "assemble_drift_diffusion",
    "stationary_covariance",
    "adiabatic_check",
    "__version__",
]
