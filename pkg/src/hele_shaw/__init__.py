"""Hele-Shaw flows with rational f' tracked through the zeros and poles of f'.

The library evolves ``g = f'`` of a univalent map of the disk by moving its
zeros and poles (``dynamics``), with the Poisson-Schwarz data of the
boundary measure in closed form (``poisson``).  Independent checks come from
harmonic moments (``moments``), closed-form solutions (``gallery``), a
spectral integrator of the Taylor coefficients (``oracle``) and large-time
laws (``asymptotics``).
"""
from .errors import *  # noqa: F401,F403
from .rational_map import (
    RationalDerivative,
    TaylorSeries,
    eval_f,
    eval_g,
    eval_g_star,
    map_from_spec,
    map_to_spec,
    random_map,
    taylor_coeffs,
    to_log_rational,
    univalence_report,
)
from .poisson import coefficients_A, eval_P, eval_P_star, poisson_numerator, q_for_unit_growth
from .moments import moment_vector, moments_contour, moments_richardson, trajectory_moment_report
from .dynamics import (
    UNIT_GROWTH,
    EventThresholds,
    RunConfig,
    SimState,
    Trajectory,
    conservation_residual,
    continue_through_collision,
    detect_events,
    rhs,
    run_simulation,
    step,
)
from .asymptotics import (
    coefficient_scaling_check,
    convergence_report,
    pole_envelope_check,
    repulsion_predicates,
    rescaled_zeros,
    targets_from_moments,
)
from .oracle import SpectralState, P_spectral, cross_validate, lk_coefficient_rhs, run_oracle
from . import gallery

__version__ = "0.1.0"
