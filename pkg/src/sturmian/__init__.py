"""Spectra, fractal-dimension bounds and transport bounds for Sturmian
Jacobi operators (diagonal and off-diagonal quasicrystal chains)."""

from .cf import (
    ContinuedFraction,
    ConvergentTable,
    birkhoff_average,
    convergents,
    gauss_kuzmin_density,
    khintchin_C,
    pair_probability,
    sample_quotients,
    sturmian_letter,
    sturmian_word,
)
from .errors import (
    CFPrecisionError,
    EnumerationError,
    NonConvergedError,
    SturmianError,
    ThresholdError,
    ValidationError,
)
from .numerics import (
    EigenSystem,
    LinFit,
    LogMatrix2,
    QuadResult,
    TridiagMatrix,
    linfit,
    logmat_mul,
    logmat_pow,
    quadrature,
    tridiag_eigh,
    tridiag_solve_complex,
)
from .spectrum import (
    Band,
    BandCounts,
    FibonacciBandTree,
    RaymondBandTree,
    SpectrumCover,
    alpha_upper_bound,
    approximant_trace,
    band_counts,
    band_counts_sequence,
    band_length_bounds,
    box_counting_estimate,
    compute_D,
    dim_lower_bound,
    dim_lower_bound_as,
    enumerate_bands,
    epsilon_scale,
    grid_scan_bands,
    two_step_factor,
    xi_c,
)
from .tracemap import (
    GrowthFloor,
    MembershipResult,
    ModelParams,
    TraceOrbit,
    chebyshev_S,
    fricke_vogt_residual,
    growth_floor,
    initial_traces,
    pseudospectrum_member,
    site_transfer,
    trace_orbit,
    transfer_matrix,
)
from .transport import (
    JacobiOperator,
    ProbabilityGrid,
    TransportSummary,
    averaged_grid,
    averaged_outside,
    build_operator,
    evolve,
    fit_exponents,
    outside_probability,
    parseval_average,
    parseval_identity,
    scale_N_of_T,
    spreading_exponent,
    transfer_bound_rhs,
)

__version__ = "0.1.0"
