import os
from dataclasses import dataclass

# Contract tolerances
ELLIPTIC_RTOL = 1e-10
LATTICE_RTOL = 1e-12
FIELD_EVAL_RTOL = 1e-9
FIELD_EQUAL_RTOL = 1e-8
OPERATOR_EQUAL_RTOL = 1e-8
QES_INVARIANCE_TOL = 1e-8
QES_RESIDUAL_TOL = 1e-7
INTERTWINE_TOL = 1e-7
DET_TOL = 1e-8
TRACE_TOL = 1e-6
FREE_TRACE_TOL = 1e-8
TRANSFORM_RESIDUAL_TOL = 1e-5
DERIVATIVE_TRANSFORM_TOL = 1e-7
COMMUTATOR_TOL = 1e-6

# Elliptic kernel
POLE_EXCLUSION_FACTOR = 1e-6        # times min(|2 omega1|, |2 omega3|)
LAURENT_TERMS = 40
SERIES_RADIUS_FRACTION = 0.25       # |z| <= fraction * shortest period before the series is used
EISENSTEIN_N_MAX = 100

# Path integration
ODE_RTOL = 1e-12
ODE_ATOL = 1e-14
ODE_METHOD = 'DOP853'
CROSSCHECK_METHOD = 'RKV65'
PATH_CLEARANCE_FACTOR = 0.05        # times min(|2 omega1|, |2 omega3|)
DETOUR_SEGMENTS = 24

# Pochhammer contours
CONTOUR_CLEARANCE = 0.08
INFINITY_RADIUS = None              # None: derived from the configuration of points
QUAD_EPSREL = 1e-10
QUAD_LIMIT = 400
QUAD_MAX_RELATIVE_ERROR = 1e-8

# Symbolic size budget (total numerator degree) before numeric fall-backs
SYMBOLIC_SIZE_BUDGET = 4000

DEFAULT_SEED = 42
OUTPUT_DIGITS = 15

DEFAULT_OUTPUT_DIR = os.environ.get('HEUN_OUTPUT_DIR', 'artifacts')
DEFAULT_WORKERS = int(os.environ.get('HEUN_WORKERS', '0')) or (os.cpu_count() or 1)
LOG_LEVEL = os.environ.get('HEUN_LOG_LEVEL', 'INFO')
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


@dataclass(frozen=True)
class IntegratorConfig:
    """Settings for complex-path ODE continuation."""
    method: str = ODE_METHOD
    rtol: float = ODE_RTOL
    atol: float = ODE_ATOL
    clearance_factor: float = PATH_CLEARANCE_FACTOR
    detour_segments: int = DETOUR_SEGMENTS
    max_step: float = float('inf')


@dataclass(frozen=True)
class ContourConfig:
    """Settings for Pochhammer contour construction and quadrature."""
    clearance: float = CONTOUR_CLEARANCE
    infinity_radius: float | None = INFINITY_RADIUS
    epsrel: float = QUAD_EPSREL
    limit: int = QUAD_LIMIT
    max_relative_error: float = QUAD_MAX_RELATIVE_ERROR
    refinements: int = 2
