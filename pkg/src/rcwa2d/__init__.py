"""Two-dimensional RCWA for s-polarized scattering by periodic gratings."""

from .analysis import AprioriReport, ResidualReport, apriori_constant, sesquilinear_residual
from .convergence import ConvergenceReport, ReferenceSpec, fit_rate, run_h_sweep, run_m_sweep
from .errors import (
    EigSolverFailure,
    IllConditioned,
    InsufficientPoints,
    RayleighAnomaly,
    RCWAError,
    SingularInterface,
)
from .fields import diffraction_efficiencies, evaluate_field, field_norm, norm_error, norm_errors
from .geometry import (
    DeviceSpec,
    GradedPermittivity,
    InterfaceProfile,
    LinearSegment,
    PolynomialSegment,
    SineSegment,
    Slicing,
    build_slicing,
    check_nontrapping,
    max_crossings,
    stairstep_error_norm,
    stairstep_permittivity,
)
from .modal import IncidentWave, ModeBasis, dtn_apply, mode_basis, permittivity_fourier_coeffs, toeplitz_matrix, truncate
from .oracle import LayerStack, multilayer_scattering, multilayer_solution
from .solver import ScatterMatrix, ScatterSolution, solve_device, solve_scattering

__version__ = "0.1.0"
