"""Pseudo-spectral toolkit for mild solutions of the incompressible
Navier-Stokes equations on the periodic box, with Lorentz and Besov norm
computations and a Picard solver in Kato-type spaces.
"""

from .config import ExperimentConfig, dump_config, load_config, parse_config
from .corpus import CorpusSpec, dilate_field, generate_corpus, power_law_profile, random_scalar_field
from .duhamel import (
    BilinearConstantReport,
    TimeGrid,
    Trajectory,
    bilinear_B,
    bilinear_trajectory,
    estimate_bilinear_constant,
    quadrature_convergence,
    symbol_bound_check,
)
from .errors import (
    ConfigError,
    DivergenceError,
    EmptyInputError,
    ExponentWindowError,
    GridMismatchError,
    MildNSError,
    NumericalBlowupError,
    OracleInstabilityError,
    ParameterError,
    ZeroModeError,
)
from .experiments import emit_csv, run_experiment
from .lorentz_norms import (
    KatoIndex,
    NormIndex,
    besov_norm_heat,
    decreasing_rearrangement,
    kato_weighted_sup,
    lebesgue_norm,
    lorentz_norm,
    sobolev_lorentz_norm,
)
from .picard_solver import (
    OracleIntegrator,
    PicardSolver,
    SolverConfig,
    create_solver,
    oracle_integrate,
    picard_iterate,
    smallness_gate,
)
from .spectral_field import (
    ScalarField,
    SpectralGrid,
    VectorField,
    fractional_laplacian,
    heat_propagate,
    leray_project,
    riesz_potential,
)

__version__ = "0.1.1"
