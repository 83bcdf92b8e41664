"""Steady sonic-boundary bipolar Euler-Poisson solver and analysis toolkit."""
from .errors import (
    AssemblyError,
    BracketError,
    DomainError,
    NoSolutionError,
    ParameterError,
    SonicEPError,
)
from .model import (
    DopingProfile,
    FlowClass,
    ProblemSpec,
    SolutionFields,
    classify_flow,
    doping_eval,
    eval_phi,
    from_transformed,
    invert_phi,
    recover_E,
    to_transformed,
)
from .discretization import Grid, StateVector, make_grid, quadrature
from .solver import (
    ContinuationSchedule,
    NewtonOptions,
    SolveReport,
    UniquenessReport,
    continuation_solve,
    default_init,
    newton_solve,
    solve_cold,
    multi_start_uniqueness,
)
from .oracle import Trajectory, integrate, shoot_match
from .analysis import ThresholdSet, phase_scan, thresholds

__version__ = "0.1.0"
