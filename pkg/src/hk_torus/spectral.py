"""Gap-vector transition structure and post-freeze decay estimation.

The difference vector x* collects the n signed consecutive gaps around
the circle.  When no consecutive pair is out of range and the radius is
below one sixth of the perimeter, one synchronous update acts on x* as
a column-stochastic matrix with a rooted associated graph; after the
influence graph stops changing, the per-agent displacement vector obeys
a fixed row-stochastic recursion and shrinks geometrically.  This
module builds those matrices from simulated states and measures how
well the predicted identities hold.

Matrix rows and columns are 0-based like numpy; agent and gap labels in
reports are 1-based like everywhere else in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import (
    InfluenceGraph,
    SystemState,
    Trace,
    compute_neighbors,
    detect_cut,
)
from .errors import (
    AllMerged,
    CutPresent,
    HorizonTooShort,
    InsufficientDecayData,
    NonConsecutive,
    RadiusTooLarge,
    StaleT0,
    WrongKind,
)
from .torus import vect_between

__all__ = [
    "DiffVector",
    "TransitionMatrix",
    "VelocityVector",
    "RootednessResult",
    "VelocityRecursionReport",
    "RateEstimate",
    "diff_vector",
    "gap_transition_matrix",
    "column_sums",
    "check_rooted",
    "velocity",
    "averaging_matrix",
    "check_velocity_recursion",
    "estimate_rate",
    "geometric_rate_bound",
    "POSITIVITY_EPS",
    "DECAY_FLOOR_FACTOR",
]

POSITIVITY_EPS = 1e-12
DECAY_FLOOR_FACTOR = 1e-13
MIN_FIT_POINTS = 10


@dataclass(frozen=True, eq=False)
class DiffVector:
    """Signed consecutive gaps x*_i = vect(x_i, x_{i+1}), cyclically closed."""

    entries: np.ndarray
    t: int


def diff_vector(state: SystemState) -> DiffVector:
    pos = state.positions
    gaps = vect_between(pos, np.roll(pos, -1), state.params.p)
    return DiffVector(gaps, state.t)


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """A dense n-by-n update matrix of one of the two kinds.

    kind "gap" maps the difference vector forward one step and is
    column-stochastic on uncut states; kind "averaging" maps positions
    (or velocities, once the graph is frozen) and is row-stochastic by
    construction.
    """

    entries: np.ndarray
    t: int
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in ("gap", "averaging"):
            raise ValueError(f"unknown matrix kind {self.kind!r}")

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def _require_gap_preconditions(state: SystemState, graph: InfluenceGraph) -> None:
    if not state.params.strict_sixth:
        raise RadiusTooLarge(
            f"gap matrix needs r < p/6, got r={state.params.r} with p={state.params.p}"
        )
    cut = detect_cut(graph)
    if cut.cut:
        raise CutPresent(f"consecutive pair starting at agent {cut.witness} is out of range")


def gap_transition_matrix(state: SystemState, graph: Optional[InfluenceGraph] = None) -> TransitionMatrix:
    """The matrix sending x*(t) to x*(t+1), built from window extremes.

    Entries follow a four-case piecewise formula over the unrolled
    neighbor windows [ell_i, r_i] and [ell_{i+1}, r_{i+1}]; unrolled
    column positions wrap mod n and wrapped contributions accumulate.
    A consecutive pair with identical windows (agents merging by t+1)
    yields an all-zero row.
    """
    if graph is None:
        graph = compute_neighbors(state)
    _require_gap_preconditions(state, graph)
    n = state.n
    ell = graph.left_index
    r = graph.right_index
    ell_next = np.roll(ell, -1).copy()
    r_next = np.roll(r, -1).copy()
    ell_next[-1] += n
    r_next[-1] += n
    nu = (r - ell + 1).astype(float)
    nu_next = (r_next - ell_next + 1).astype(float)

    # all four k-ranges live inside [2 - n, 2n]
    k = np.arange(2 - n, 2 * n + 1)
    K = k[None, :]
    L, R = ell[:, None], r[:, None]
    LN, RN = ell_next[:, None], r_next[:, None]
    I = np.arange(1, n + 1)[:, None]
    own = (K - L + 1) / nu[:, None]
    nxt = (K - LN + 1) / nu_next[:, None]
    own_r = (R - K) / nu[:, None]
    nxt_r = (RN - K) / nu_next[:, None]
    values = np.select(
        [
            (L <= K) & (K <= LN - 1),
            (LN <= K) & (K <= I - 1),
            (I <= K) & (K <= R - 1),
            (R <= K) & (K <= RN - 1),
        ],
        [own, own - nxt, nxt_r - own_r, nxt_r],
        default=0.0,
    )
    entries = np.zeros((n, n))
    rows = np.broadcast_to(np.arange(n)[:, None], values.shape)
    cols = np.broadcast_to((k - 1) % n, values.shape)
    np.add.at(entries, (rows, cols), values)
    return TransitionMatrix(entries, state.t, "gap")


def column_sums(m: TransitionMatrix) -> np.ndarray:
    if m.kind != "gap":
        raise WrongKind(f"column sums are meaningful for gap matrices, got {m.kind!r}")
    return m.entries.sum(axis=0)


@dataclass(frozen=True)
class RootednessResult:
    """A spanning out-tree witnessing that the gap matrix's graph is rooted.

    `tree_edges` hold 1-based (parent, child) pairs, each required to
    correspond to a strictly positive matrix entry; `failed_edges` lists
    any that do not, in which case rooted is False.
    """

    rooted: bool
    root: int
    tree_edges: tuple[tuple[int, int], ...]
    failed_edges: tuple[tuple[int, int], ...]


def check_rooted(m: TransitionMatrix, merge_classes: list[list[int]]) -> RootednessResult:
    """Build the spanning tree dictated by the merge classes and verify it.

    Walking the circle from the first non-merged consecutive pair, each
    agent hangs off its predecessor, except that an agent merged with
    its predecessor hangs off the parent that started the merged run
    (a fan-out).  Every tree edge (a, b) must have entries[a-1, b-1]
    strictly positive.
    """
    if m.kind != "gap":
        raise WrongKind(f"rootedness applies to gap matrices, got {m.kind!r}")
    n = m.n
    class_of = {}
    for cid, cls in enumerate(merge_classes):
        for label in cls:
            class_of[label] = cid
    succ = lambda i: i % n + 1
    start = next((i for i in range(1, n + 1) if class_of[i] != class_of[succ(i)]), None)
    if start is None:
        raise AllMerged("every consecutive pair has merged; no tree anchor exists")
    order = [(start + k - 1) % n + 1 for k in range(n)]
    edges = [(order[0], order[1])]
    run_parent = order[0]
    for prev, cur in zip(order[1:], order[2:]):
        if class_of[cur] == class_of[prev]:
            edges.append((run_parent, cur))
        else:
            edges.append((prev, cur))
            run_parent = prev
    failed = tuple((a, b) for a, b in edges if m.entries[a - 1, b - 1] <= POSITIVITY_EPS)
    return RootednessResult(not failed, start, tuple(edges), failed)


@dataclass(frozen=True, eq=False)
class VelocityVector:
    """Signed per-agent displacements vect(x_i(t), x_i(t+1))."""

    entries: np.ndarray
    t: int


def velocity(state_t: SystemState, state_t1: SystemState) -> VelocityVector:
    if state_t1.t != state_t.t + 1:
        raise NonConsecutive(f"states at t={state_t.t} and t={state_t1.t} are not consecutive")
    return VelocityVector(vect_between(state_t.positions, state_t1.positions, state_t.params.p), state_t.t)


def averaging_matrix(graph: InfluenceGraph) -> TransitionMatrix:
    """Row-stochastic neighbor-averaging operator of one graph snapshot."""
    entries = graph.neighbor_mask / graph.counts()[:, None]
    return TransitionMatrix(entries, graph.t, "averaging")


@dataclass(frozen=True, eq=False)
class VelocityRecursionReport:
    """Residuals of the frozen-graph velocity recursion.

    residuals[k] is the max-norm mismatch between the velocity at
    t0 + 1 + k and the averaging matrix applied to the previous
    velocity; all must stay at or below `threshold`.
    """

    t0: int
    residuals: np.ndarray
    threshold: float
    flagged: tuple[int, ...]

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0

    @property
    def passed(self) -> bool:
        return not self.flagged


def check_velocity_recursion(trace: Trace, t0: int, threshold_factor: float = 1e-9) -> VelocityRecursionReport:
    """Verify velocities obey the fixed averaging recursion after t0."""
    params = trace.params
    if not params.strict_sixth:
        raise RadiusTooLarge(f"recursion needs r < p/6, got r={params.r} with p={params.p}")
    base = trace.records[0].t
    if t0 < base:
        raise ValueError(f"t0={t0} precedes the trace start {base}")
    if trace.last_t < t0 + 2:
        raise HorizonTooShort(f"need records through t0+2={t0 + 2}, trace ends at {trace.last_t}")
    window = trace.records[t0 - base :]
    frozen_hash = window[0].graph_hash
    for rec in window:
        if rec.cut:
            raise CutPresent(f"cut present at t={rec.t}")
        if rec.graph_hash != frozen_hash:
            raise StaleT0(f"influence graph changed at t={rec.t}, after the claimed freeze at t0={t0}")
    positions = np.stack([rec.positions for rec in window])
    vel = vect_between(positions[:-1], positions[1:], params.p)
    b = averaging_matrix(compute_neighbors(trace.state_at(t0)))
    residuals = np.abs(vel[1:] - vel[:-1] @ b.entries.T).max(axis=1)
    threshold = threshold_factor * params.p
    flagged = tuple(int(t0 + 1 + k) for k in np.flatnonzero(residuals > threshold))
    return VelocityRecursionReport(t0, residuals, threshold, flagged)


@dataclass(frozen=True)
class RateEstimate:
    """Fitted geometric decay of the post-freeze velocities.

    rho_hat is exp(slope) of a least-squares line through
    log(max_i |velocity_i(t)|) on the qualifying steps; fit_window is
    the (first, last) step used.  theoretical_bound = 1 - n^(-n) is the
    known worst-case contraction factor, reported for context only; it
    is usually far above the observed rate.
    """

    rho_hat: float
    fit_window: tuple[int, int]
    r_squared: float
    theoretical_bound: float


def geometric_rate_bound(n: int) -> float:
    return 1.0 - float(n) ** (-n)


def estimate_rate(trace: Trace, t0: int) -> RateEstimate:
    """Fit the decay rate of max moves over the post-t0 steps.

    Only steps whose largest move exceeds 1e-13 * p enter the fit; at
    least 10 such steps are required.
    """
    params = trace.params
    base = trace.records[0].t
    if t0 < base:
        raise ValueError(f"t0={t0} precedes the trace start {base}")
    floor = DECAY_FLOOR_FACTOR * params.p
    ts, peaks = [], []
    for rec in trace.records[t0 - base :]:
        if rec.moves is None:
            break
        peak = float(rec.moves.max())
        if peak > floor:
            ts.append(rec.t)
            peaks.append(peak)
    if len(ts) < MIN_FIT_POINTS:
        raise InsufficientDecayData(
            f"need at least {MIN_FIT_POINTS} decaying steps after t0={t0}, found {len(ts)}"
        )
    x = np.asarray(ts, dtype=float)
    y = np.log(np.asarray(peaks))
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateEstimate(
        rho_hat=float(math.exp(slope)),
        fit_window=(ts[0], ts[-1]),
        r_squared=r_squared,
        theoretical_bound=geometric_rate_bound(trace.n),
    )
