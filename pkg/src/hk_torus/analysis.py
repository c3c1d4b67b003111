"""Per-trace accounting checks for the averaging dynamics.

Everything here certifies a quantitative statement on a concrete
simulated trace: the capped-distance potential W decreases by at least
four times the squared step moves, the total 2-kinetic energy stays
under n^2/4, every batch of new links admits an agent that gained a
left neighbor without gaining a right one and is followed by a move
larger than 1/(6n), and the periodic line lift reproduces the potential
drop with bounded remainders.

The checks recompute their quantities from recorded positions rather
than trusting derived fields in the trace.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import (
    InfluenceGraph,
    SystemState,
    Trace,
    capped_sq_sum,
    compute_neighbors,
    line_step,
    step,
    unroll,
)
from .errors import HorizonTooShort, NoNewLink

__all__ = [
    "LyapunovRecord",
    "KineticEnergyAccumulator",
    "GraphEvent",
    "GraphStabilityReport",
    "UnrollReport",
    "AddLinkMoveCheck",
    "lyapunov_W",
    "line_lyapunov",
    "check_lyapunov_decrease",
    "kinetic_energy",
    "diff_graphs",
    "detect_stability",
    "find_left_gainer",
    "check_addlink_move",
    "unroll_check",
    "move_threshold",
]

LYAPUNOV_TOL_FACTOR = 1e-9
UNROLL_TOL = 1e-9


def lyapunov_W(state: SystemState) -> float:
    """Potential W: sum over ordered agent pairs of min(1, distance^2)."""
    return capped_sq_sum(state.positions, state.params.p)


def line_lyapunov(positions: np.ndarray) -> float:
    """Same potential for agents on the line (plain differences)."""
    d = positions[None, :] - positions[:, None]
    return float(np.minimum(1.0, d * d).sum())


@dataclass(frozen=True)
class LyapunovRecord:
    """One step of the potential-decrease ledger.

    `drop` is W(t) - W(t+1) and must cover 4*sum_sq_moves up to the
    tolerance that produced `passed`.
    """

    t: int
    W: float
    sum_sq_moves: float
    drop: float
    passed: bool


def check_lyapunov_decrease(trace: Trace, tol_factor: float = LYAPUNOV_TOL_FACTOR) -> list[LyapunovRecord]:
    """Certify the per-step potential drop on every recorded step."""
    if len(trace) < 2:
        raise ValueError("need a trace with at least one step")
    n = trace.n
    tol = tol_factor * n * n
    p = trace.params.p
    out = []
    w_here = capped_sq_sum(trace.records[0].positions, p)
    for rec, nxt in zip(trace.records, trace.records[1:]):
        w_next = capped_sq_sum(nxt.positions, p)
        ssq = float(np.dot(rec.moves, rec.moves))
        drop = w_here - w_next
        out.append(LyapunovRecord(rec.t, w_here, ssq, drop, drop >= 4.0 * ssq - tol))
        w_here = w_next
    return out


@dataclass(frozen=True, eq=False)
class KineticEnergyAccumulator:
    """Running totals of per-step move magnitudes raised to power s."""

    s: float
    partial: float
    prefix: np.ndarray


def kinetic_energy(trace: Trace, s: float = 2.0) -> KineticEnergyAccumulator:
    if s <= 0:
        raise ValueError("the exponent s must be positive")
    per_step = [float((rec.moves**s).sum()) for rec in trace.records if rec.moves is not None]
    prefix = np.cumsum(per_step) if per_step else np.zeros(0)
    partial = float(prefix[-1]) if per_step else 0.0
    return KineticEnergyAccumulator(s, partial, prefix)


@dataclass(frozen=True)
class GraphEvent:
    """Link diff between the graphs at t and t+1 (1-based ordered pairs)."""

    t: int
    added_links: frozenset[tuple[int, int]]
    removed_links: frozenset[tuple[int, int]]

    def __bool__(self) -> bool:
        return bool(self.added_links or self.removed_links)


def diff_graphs(g1: InfluenceGraph, g2: InfluenceGraph) -> GraphEvent:
    if g1.n != g2.n:
        raise ValueError("graphs must have the same number of agents")
    e1, e2 = g1.edges(), g2.edges()
    return GraphEvent(g1.t, frozenset(e2 - e1), frozenset(e1 - e2))


@dataclass(frozen=True)
class GraphStabilityReport:
    """Observed freeze time of the influence graph.

    The graph was constant from t0_candidate through the end of the
    trace, a span of stable_window steps.  Nothing is claimed beyond the
    recorded horizon.
    """

    t0_candidate: int
    stable_window: int
    final_edges: frozenset[tuple[int, int]]


def detect_stability(trace: Trace) -> GraphStabilityReport:
    last_change: Optional[int] = None
    for rec in trace.records[1:]:
        if rec.events is not None:
            last_change = rec.t
    t0 = last_change if last_change is not None else trace.records[0].t
    final_edges = compute_neighbors(trace.state_at(trace.last_t)).edges()
    return GraphStabilityReport(t0, trace.last_t - t0, final_edges)


def find_left_gainer(g_t: InfluenceGraph, g_t1: InfluenceGraph) -> Optional[int]:
    """Smallest agent that gained a left neighbor but no right neighbor.

    Raises NoNewLink when no link was added at all; returns None when a
    link was added yet no agent fits, which refutes the claim the caller
    is checking.
    """
    if g_t.n != g_t1.n:
        raise ValueError("graphs must have the same number of agents")
    if not (g_t1.neighbor_mask & ~g_t.neighbor_mask).any():
        raise NoNewLink(f"no link added between t={g_t.t} and t={g_t1.t}")
    gained_left = (g_t1.left_mask & ~g_t.left_mask).any(axis=1)
    gained_right = (g_t1.right_mask & ~g_t.right_mask).any(axis=1)
    idx = np.flatnonzero(gained_left & ~gained_right)
    if idx.size == 0:
        return None
    return int(idx[0]) + 1


def move_threshold(n: int) -> float:
    """Minimum displacement a new link must trigger: 1/(6n)."""
    return 1.0 / (6.0 * n)


@dataclass(frozen=True)
class AddLinkMoveCheck:
    """Outcome of the large-move check after a link addition.

    The addition happened between event_t and event_t+1; `max_move` is
    the largest single-agent displacement over the next two steps,
    achieved by `agent` during the step starting at `at_t`.
    """

    event_t: int
    threshold: float
    max_move: float
    agent: int
    at_t: int
    passed: bool


def check_addlink_move(trace: Trace, event_t: int) -> AddLinkMoveCheck:
    base = trace.records[0].t
    idx = event_t - base
    if idx < 0 or idx + 1 >= len(trace.records):
        raise HorizonTooShort(f"trace does not cover the step after event_t={event_t}")
    after = trace.records[idx + 1]
    if after.events is None or not after.events.added:
        raise NoNewLink(f"no link added between t={event_t} and t={event_t + 1}")
    m1 = trace.records[idx].moves
    m2 = after.moves
    if m1 is None or m2 is None:
        raise HorizonTooShort(f"need recorded moves through t={event_t + 2}")
    thr = move_threshold(trace.n)
    best_t, moves = max(((event_t, m1), (event_t + 1, m2)), key=lambda tm: float(tm[1].max()))
    agent = int(np.argmax(moves)) + 1
    best = float(moves.max())
    return AddLinkMoveCheck(event_t, thr, best, agent, best_t, best > thr)


@dataclass(frozen=True)
class UnrollReport:
    """Potential accounting for the periodic lift with `copies` copies.

    v0/v1 and w0/w1 are the line and circle potentials before and after
    one synchronous step; s is the circle's sum of squared moves.  The
    remainders r0 and r1 measure how much of the line potential's
    headroom is not explained by whole copies of the circle's headroom:

        r0 = ((n*copies)^2 - v0) - (copies - 2) * (n^2 - w0)
        r1 = ((n*copies)^2 - v1) - (copies - 4) * (n^2 - w1)

    They must land in [0, 2n^2] and [0, 4n^2].  `asserted` is False for
    n = 1, where both remainders sit exactly on the upper bounds and the
    bounds are recorded rather than enforced.
    """

    n: int
    copies: int
    v0: float
    v1: float
    w0: float
    w1: float
    r0: float
    r1: float
    s: float
    r0_in_bounds: bool
    r1_in_bounds: bool
    line_drop_holds: bool
    drop_inequality_holds: bool
    asserted: bool

    @property
    def passed(self) -> bool:
        bounds_ok = self.r0_in_bounds and self.r1_in_bounds if self.asserted else True
        return bounds_ok and self.line_drop_holds and self.drop_inequality_holds


def unroll_check(state: SystemState, N: int, tol: float = UNROLL_TOL) -> UnrollReport:
    """Evolve the lifted line system one step and audit the accounting.

    Checks three facts: both remainders above stay in their bounds, the
    line potential drops by at least four times the line's squared
    moves, and the finite-copies inequality

        (N - 4) * (w0 - w1) >= 4 * (N - 2) * s - 4 * n^2

    relating the circle potentials to the circle's squared moves.
    """
    n = state.n
    line0 = unroll(state, N)
    line1 = line_step(line0)
    v0 = line_lyapunov(line0.positions)
    v1 = line_lyapunov(line1.positions)
    w0 = lyapunov_W(state)
    nxt, moves = step(state)
    w1 = lyapunov_W(nxt)
    s = float(np.dot(moves, moves))
    m = n * N
    r0 = (m * m - v0) - (N - 2) * (n * n - w0)
    r1 = (m * m - v1) - (N - 4) * (n * n - w1)
    line_moves_sq = float(((line1.positions - line0.positions) ** 2).sum())
    return UnrollReport(
        n=n,
        copies=N,
        v0=v0,
        v1=v1,
        w0=w0,
        w1=w1,
        r0=r0,
        r1=r1,
        s=s,
        r0_in_bounds=bool(-tol <= r0 <= 2 * n * n + tol),
        r1_in_bounds=bool(-tol <= r1 <= 4 * n * n + tol),
        line_drop_holds=bool(v0 - v1 >= 4.0 * line_moves_sq - tol),
        drop_inequality_holds=bool((N - 4) * (w0 - w1) >= 4.0 * ((N - 2) * s - n * n) - tol),
        asserted=n >= 2,
    )
