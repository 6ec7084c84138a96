"""spdelab: a spectral-Galerkin laboratory for Hilbert-space stochastic
evolution equations with measurable, locally bounded drift.

The package simulates mild solutions by exponential Euler with exact
noise convolution, solves drifted resolvent equations in a Hermite chaos
basis, runs same-noise uniqueness couplings, reweights path measures,
and checks growth bounds — all at desk scale with reproducible,
counter-based randomness.
"""

from .errors import (
    ConfigError,
    EvaluationError,
    NoContractionError,
    NonContainmentError,
    ParameterError,
    PreconditionError,
    SimulationError,
    SolverConvergenceError,
    SpdelabError,
)
from .spectrum import (
    GRADIENT_NORM_CONSTANT,
    GaussianSpec,
    ModeSpectrum,
    TraceClassReport,
    heat_factor,
    invariant_measure,
    mehler_gradient_factor,
    smoothing_covariance,
    trace_class_margin,
    transition_covariance,
)
from .ou import (
    NoiseBundle,
    OUPath,
    mehler_apply,
    mehler_gradient,
    noise_batch,
    ou_step,
    sample_invariant,
    simulate_ou,
    time_grid,
)
from .drifts import (
    DriftField,
    builtin_drifts,
    dissipativity_check,
    galerkin_project,
    make_drift,
    register_drift,
    smooth,
    truncate,
    with_outside_bump,
)
from .kolmogorov import (
    ChaosExpansion,
    ResolventSolution,
    assemble_vector_field,
    chaos_ready_drift,
    contraction_threshold,
    generator_apply,
    gradient,
    multiply_project,
    project_function,
    resolvent_apply,
    sobolev_norms,
    solve_component,
    zero_expansion,
)
from .mild import (
    AprioriReport,
    GirsanovLedger,
    PathBundle,
    PatchedRun,
    UniquenessReport,
    apriori_check,
    coupled_uniqueness_run,
    detect_exit,
    exp_euler_batch,
    exp_euler_run,
    girsanov_weight,
    patched_strong_solution,
    zvonkin_residual,
)

__version__ = "0.1.0"
