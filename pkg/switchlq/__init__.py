"""Regime-switching stochastic LQ control: coupled Riccati solvers, mean-square
stability, Monte Carlo simulation and turnpike verification."""
__version__ = "0.1.0"

get_version = lambda: __version__

from .exceptions import (
    SwitchLQError, ProblemStructureError, SingularMatrixError, SolverError, StepSizeUnderflowError,
    RegularityLossError, HorizonCapError, NotStabilizingError, CertificateError, FitError,
    SimulationDivergedError, ConfigError,
)
from .model import (
    Dimensions, RegimeCoefficients, CostWeights, SwitchingGenerator, LQProblem, InitialTriple,
    ValidationReport, validate_problem, convexity_margin, closed_loop, apply_feedback_shift,
    stage_cost, constant_gains,
)
from .markov import (
    ChainPath, lambda_apply, sample_chain_path, sample_chain_state, transition_matrix,
    stationary_distribution,
)
from .riccati import (
    DRESolution, ARESolution, solve_dre, solve_are, newton_refine, are_residual, dre_rhs,
    gain_from_P, value_function, regularity_margin, gain_lipschitz_constant,
)
from .stability import (
    DissipativityCertificate, SecondMomentState, quadratic_generator, moment_rhs, moment_spectral_abscissa,
    check_dissipativity, propagate_second_moment, solve_coupled_lyapunov, certify_stabilizer,
    closed_loop_cost,
)
from .simulate import (
    SimulationConfig, PathStats, CoupledGapStats, simulate_closed_loop, simulate_coupled, estimate_cost,
)
from .turnpike import (
    GapSeries, RateFit, TurnpikeReport, TurnpikeSettings, riccati_gap_series, gain_gap_series,
    verify_turnpike_bound, integral_gap, fit_exponential_rate, semigroup_check, run_experiment,
    write_report,
)
