"""Bounded-confidence averaging on the circle, with per-trace certification.

The package simulates synchronous neighbor averaging of n agents on a
circle of perimeter p with influence radius r, records full traces, and
numerically certifies on each trace the quantitative facts the dynamics
is supposed to obey: monotone potential decrease, the kinetic-energy
bound, eventual influence-graph freezing, the structure of the gap
transition matrix, and geometric velocity decay.
"""

from .analysis import (
    AddLinkMoveCheck,
    GraphEvent,
    GraphStabilityReport,
    KineticEnergyAccumulator,
    LyapunovRecord,
    UnrollReport,
    check_addlink_move,
    check_lyapunov_decrease,
    detect_stability,
    diff_graphs,
    find_left_gainer,
    kinetic_energy,
    lyapunov_W,
    move_threshold,
    unroll_check,
)
from .dynamics import (
    CutResult,
    InfluenceGraph,
    LineSystemState,
    LinkChanges,
    SystemState,
    Trace,
    TraceRecord,
    compute_neighbors,
    detect_cut,
    detect_merges,
    equally_spaced_state,
    initial_state,
    line_step,
    random_state,
    run,
    step,
    unroll,
)
from .errors import (
    AllMerged,
    ConfigInvalid,
    CutPresent,
    HKTorusError,
    HorizonTooShort,
    InsufficientDecayData,
    InvalidN,
    NoNewLink,
    NonConsecutive,
    NonFinite,
    NonPositivePerimeter,
    PerimeterMismatch,
    RadiusTooLarge,
    StaleT0,
    TraceCorrupt,
    UnknownCheck,
    WrongKind,
)
from .spectral import (
    DiffVector,
    RateEstimate,
    RootednessResult,
    TransitionMatrix,
    VelocityRecursionReport,
    VelocityVector,
    averaging_matrix,
    check_rooted,
    check_velocity_recursion,
    column_sums,
    diff_vector,
    estimate_rate,
    gap_transition_matrix,
    geometric_rate_bound,
    velocity,
)
from .torus import (
    CircleParams,
    TorusPoint,
    canonicalize,
    canonicalize_array,
    pairwise_distance,
    pairwise_vect,
    phi,
    phi_array,
    torus_distance,
    torus_vect,
    vect_between,
)
from .traceio import read_trace, records_equal, write_matrix_csv, write_report, write_trace
from .verify import CHECKS, CheckResult, VerifyReport, verify_trace

__version__ = "0.1.0"
