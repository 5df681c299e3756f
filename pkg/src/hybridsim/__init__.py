"""Simulation and analysis of flows switched by a discrete-time Markov chain."""

from .errors import (
    ConfigError,
    DomainError,
    GridMismatchError,
    HybridSimError,
    IndexOutOfRangeError,
    NegativeEntryError,
    NodeBudgetExceededError,
    NoConvergenceError,
    NonFiniteStateError,
    NonSquareError,
    NumericalError,
    RowSumError,
    SchemaViolationError,
    SequenceTooShortError,
    SizeMismatchError,
    UnknownSystemError,
)
from .flow import (
    IntegratorSettings,
    VectorFieldFamily,
    classify_fixed_point,
    find_fixed_points,
    flow_map,
    hybrid_flow,
    jacobian,
)
from .hybrid import (
    HybridState,
    HybridSystemSpec,
    SpiderTree,
    Trajectory,
    embedded_step,
    markov_operator,
    sample_embedded,
    simulate,
    spider,
)
from .limitset import (
    HittingResult,
    LimitSetEstimate,
    estimate_limit_set,
    hitting_bound,
    hitting_experiment,
)
from .markov import (
    TransitionMatrix,
    n_step_distribution,
    sample_next,
    stationary_distribution,
    validate,
)
from .measure import (
    GridMeasure,
    MarginalMeasure,
    coarsen,
    empirical_measure,
    invariance_report,
    marginalize,
    phase_family,
    pushforward,
    total_variation,
)
from .systems import CATALOG, Q1, Q2, build_cstr_2d, build_linear_1d, load_system

__version__ = "0.1.0"
