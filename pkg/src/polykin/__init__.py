"""Polyatomic ellipsoidal relaxation (ES-BGK) model: moments, Gaussians, entropy, runs."""

__version__ = "0.1.0"

from .entropy import (
    EntropyReport,
    boltzmann_entropy,
    compactness_pointwise,
    convexity_curve,
    entropy_production,
    entropy_report,
    f_theta_bound,
    remainder_closed_form,
    remainder_quadrature,
    theorem_check,
)
from .errors import (
    DataError,
    GridError,
    ParameterError,
    PolykinError,
    SchemeError,
    SnapshotFormatError,
    StabilityError,
    TensorNotPositiveDefinite,
    VacuumError,
)
from .gaussian import (
    anisotropic_gaussian,
    build_gaussian,
    corrected_tensor,
    lambda_delta,
    maxwellian,
    relaxation_temperature,
)
from .moments import MacroState, collision_frequency, compute_macro, conserved_moments
from .params import Params
from .quadrature import Grid, GridSpec, build_grid, integrate
from .relaxation import (
    RunConfig,
    SlabSpec,
    Trajectory,
    conservative_projection,
    run_homogeneous,
    run_slab,
    step_homogeneous,
    step_transport_1d,
)
from .sampling import make_rng, random_distribution, sample_macrostates
