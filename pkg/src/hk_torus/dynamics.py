"""Synchronous bounded-confidence averaging on the circle.

Each agent looks at every agent within arc distance r (itself included),
averages the signed displacements toward them, and moves by that average.
All agents update simultaneously from the same snapshot.

The module also provides the supporting machinery the verification layer
needs: the influence graph with its unrolled window extremes, cut and
merge detection, the trace recorder, and the lift of a circle state to a
periodic configuration on the line.

Agent labels are 1-based in every public accessor and in serialized
output; arrays are 0-based internally.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .errors import InvalidN
from .torus import (
    CircleParams,
    canonicalize_array,
    pairwise_distance,
    pairwise_vect,
    phi_array,
    vect_between,
)

__all__ = [
    "SystemState",
    "InfluenceGraph",
    "CutResult",
    "LineSystemState",
    "LinkChanges",
    "TraceRecord",
    "Trace",
    "initial_state",
    "random_state",
    "equally_spaced_state",
    "compute_neighbors",
    "step",
    "detect_cut",
    "detect_merges",
    "line_step",
    "unroll",
    "run",
    "capped_sq_sum",
]

DEFAULT_MERGE_TOL_FACTOR = 1e-12


@dataclass(frozen=True, eq=False)
class SystemState:
    """Positions of the n agents at one time step.

    `positions` holds canonical representatives in [0, p), one per agent,
    in the circular order fixed at t = 0 (the dynamics never lets agents
    cross, so the order is meaningful at every t).
    """

    t: int
    positions: np.ndarray
    params: CircleParams

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 1 or pos.size < 1:
            raise ValueError("positions must be a nonempty 1-d vector")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if np.any(pos < 0) or np.any(pos >= self.params.p):
            raise ValueError("positions must be canonical representatives in [0, p)")
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.size


def initial_state(positions, params: CircleParams) -> SystemState:
    """Build a t = 0 state: canonicalize, then sort by the chart phi.

    Sorting is stable, so ties (merged agents) keep their input order.
    """
    reps = canonicalize_array(np.asarray(positions, dtype=float), params.p)
    order = np.argsort(phi_array(reps, params.p), kind="stable")
    return SystemState(0, reps[order], params)


def random_state(params: CircleParams, n: int, seed: int) -> SystemState:
    """Draw n positions uniformly on [0, p) from a PCG64 stream.

    The generator and draw order are part of the reproducibility
    contract: the same seed yields the same state on any platform.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    gen = np.random.Generator(np.random.PCG64(seed))
    return initial_state(gen.uniform(0.0, params.p, n), params)


def equally_spaced_state(params: CircleParams, n: int) -> SystemState:
    if n < 1:
        raise ValueError("n must be at least 1")
    return initial_state(np.arange(n) * (params.p / n), params)


@dataclass(frozen=True, eq=False)
class InfluenceGraph:
    """Neighbor structure of one time step.

    `neighbor_mask[i, j]` says agent j is within distance r of agent i;
    `right_mask[i, j]` says the signed displacement from i to j lies in
    [0, r] (j is a right neighbor of i, with merged agents counting on
    both sides).  Left neighbors are the transpose by construction.

    `left_index` and `right_index` are the window extremes in unrolled
    (1-based) index space: the neighbors of agent i are exactly agents
    left_index[i-1] .. right_index[i-1], read mod n.  Their run length
    equals the neighbor count unless an exact boundary tie splits the
    window; the matrix identity checked downstream would expose that.
    """

    t: int
    n: int
    neighbor_mask: np.ndarray
    right_mask: np.ndarray
    left_index: np.ndarray
    right_index: np.ndarray

    @property
    def left_mask(self) -> np.ndarray:
        return self.right_mask.T

    def counts(self) -> np.ndarray:
        """Neighbor-set sizes |N_i| as a length-n vector."""
        return self.neighbor_mask.sum(axis=1)

    def neighbors(self, i: int) -> frozenset[int]:
        """N_i as 1-based labels."""
        return frozenset(int(j) + 1 for j in np.flatnonzero(self.neighbor_mask[i - 1]))

    def right(self, i: int) -> frozenset[int]:
        """R_i as 1-based labels."""
        return frozenset(int(j) + 1 for j in np.flatnonzero(self.right_mask[i - 1]))

    def left(self, i: int) -> frozenset[int]:
        """L_i as 1-based labels."""
        return frozenset(int(j) + 1 for j in np.flatnonzero(self.right_mask[:, i - 1]))

    def edges(self) -> frozenset[tuple[int, int]]:
        """All ordered neighbor pairs (i, j), i != j, 1-based."""
        mask = self.neighbor_mask & ~np.eye(self.n, dtype=bool)
        return frozenset((int(a) + 1, int(b) + 1) for a, b in np.argwhere(mask))

    def signature(self) -> str:
        """Short stable hash of the neighbor mask, for change detection."""
        flat = np.flatnonzero(self.neighbor_mask).astype(np.int64)
        return hashlib.sha256(flat.tobytes()).hexdigest()[:16]


def _window_extent(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lengths of the contiguous True runs right and left of the diagonal.

    Row i of `mask` is scanned outward from column i with circular
    wrapping; the diagonal itself is always treated as True.  When a row
    is entirely True the two runs are capped so together they cover each
    agent once.
    """
    n = mask.shape[0]
    ar = np.arange(n)
    fwd = mask[ar[:, None], (ar[:, None] + ar[None, :]) % n]
    bwd = mask[ar[:, None], (ar[:, None] - ar[None, :]) % n]
    for scan in (fwd, bwd):
        scan[:, 0] = True
    stop_f = ~fwd
    stop_b = ~bwd
    run_r = np.where(stop_f.any(axis=1), np.argmax(stop_f, axis=1) - 1, n - 1)
    run_l = np.where(stop_b.any(axis=1), np.argmax(stop_b, axis=1) - 1, n - 1)
    run_l = np.minimum(run_l, n - 1 - run_r)
    return run_l, run_r


def compute_neighbors(state: SystemState, tau_nbr: float = 0.0) -> InfluenceGraph:
    """Neighbor sets at the state's time step.

    Membership is decided by the closed window [-(r + tau_nbr), r + tau_nbr]
    on signed displacements, with tau_nbr = 0 by default so boundary ties
    count as neighbors exactly.
    """
    if tau_nbr < 0:
        raise ValueError("tau_nbr must be nonnegative")
    n = state.n
    thr = state.params.r + tau_nbr
    vect = pairwise_vect(state.positions, state.params.p)
    right = (vect >= 0.0) & (vect <= thr)
    nbr = right | right.T
    run_l, run_r = _window_extent(nbr)
    labels = np.arange(1, n + 1)
    return InfluenceGraph(
        t=state.t,
        n=n,
        neighbor_mask=nbr,
        right_mask=right,
        left_index=labels - run_l,
        right_index=labels + run_r,
    )


def step(state: SystemState, graph: Optional[InfluenceGraph] = None) -> tuple[SystemState, np.ndarray]:
    """One synchronous update; returns the new state and per-agent moves.

    moves[i] is the arc distance traveled by agent i+1, which equals the
    magnitude of its average displacement toward neighbors.
    """
    if graph is None:
        graph = compute_neighbors(state)
    p = state.params.p
    vect = pairwise_vect(state.positions, p)
    disp = np.where(graph.neighbor_mask, vect, 0.0).sum(axis=1) / graph.counts()
    new_positions = canonicalize_array(state.positions + disp, p)
    moves = np.abs(vect_between(state.positions, new_positions, p))
    return SystemState(state.t + 1, new_positions, state.params), moves


@dataclass(frozen=True)
class CutResult:
    """Whether some consecutive pair is out of influence range.

    `witness` is the smallest 1-based i whose successor (cyclically) is
    not among its right neighbors, or None when the circle is unbroken.
    """

    cut: bool
    witness: Optional[int]


def detect_cut(graph: InfluenceGraph) -> CutResult:
    n = graph.n
    ar = np.arange(n)
    ok = graph.right_mask[ar, (ar + 1) % n]
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        return CutResult(False, None)
    return CutResult(True, int(bad[0]) + 1)


def detect_merges(state: SystemState, tol_merge: Optional[float] = None) -> list[list[int]]:
    """Partition agents into classes of (numerically) coincident positions.

    Consecutive agents closer than tol_merge are chained together, so
    classes are contiguous in the circular order.  Returned classes hold
    1-based labels and are sorted by smallest member.
    """
    p = state.params.p
    if tol_merge is None:
        tol_merge = DEFAULT_MERGE_TOL_FACTOR * p
    if tol_merge < 0:
        raise ValueError("tol_merge must be nonnegative")
    n = state.n
    if n == 1:
        return [[1]]
    gap = np.abs(vect_between(state.positions, np.roll(state.positions, -1), p))
    linked = gap <= tol_merge
    if linked.all():
        return [list(range(1, n + 1))]
    # rotate so a class boundary sits at the array seam
    start = int(np.flatnonzero(~linked)[0]) + 1
    classes: list[list[int]] = []
    current = [start % n + 1]
    for k in range(1, n):
        i = (start + k) % n
        if linked[(i - 1) % n]:
            current.append(i + 1)
        else:
            classes.append(current)
            current = [i + 1]
    classes.append(current)
    classes.sort(key=min)
    return classes


@dataclass(frozen=True, eq=False)
class LineSystemState:
    """Agents on the real line under the classical averaging rule."""

    t: int
    positions: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 1 or pos.size < 1 or not np.all(np.isfinite(pos)):
            raise ValueError("positions must be a finite nonempty 1-d vector")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ValueError("radius must be positive")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)


def line_step(state: LineSystemState) -> LineSystemState:
    """One synchronous update of the line system."""
    y = state.positions
    mask = np.abs(y[None, :] - y[:, None]) <= state.radius
    new = (np.where(mask, y[None, :], 0.0).sum(axis=1)) / mask.sum(axis=1)
    return LineSystemState(state.t + 1, new, state.radius)


def unroll(state: SystemState, N: int) -> LineSystemState:
    """Lift a circle state to N periodic copies on the line.

    Copy k places agent i at rep(x_i) + k*p, so consecutive copies span
    disjoint perimeter-length windows.  Needs at least 4 copies so that
    the middle copies have full neighborhoods on both sides.
    """
    if N < 4:
        raise InvalidN(f"need at least 4 copies, got N={N}")
    p = state.params.p
    blocks = state.positions[None, :] + np.arange(N)[:, None] * p
    return LineSystemState(state.t, blocks.reshape(-1), state.params.r)


def capped_sq_sum(positions: np.ndarray, p: float) -> float:
    """Sum over ordered agent pairs of min(1, squared arc distance)."""
    d = pairwise_distance(positions, p)
    return float(np.minimum(1.0, d * d).sum())


@dataclass(frozen=True)
class LinkChanges:
    """Edge diff between two consecutive influence graphs (1-based pairs)."""

    added: tuple[tuple[int, int], ...]
    removed: tuple[tuple[int, int], ...]


def _mask_diff(before: np.ndarray, after: np.ndarray) -> Optional[LinkChanges]:
    off = ~np.eye(before.shape[0], dtype=bool)
    added = np.argwhere(after & ~before & off)
    removed = np.argwhere(before & ~after & off)
    if added.size == 0 and removed.size == 0:
        return None
    as_pairs = lambda idx: tuple((int(a) + 1, int(b) + 1) for a, b in idx)
    return LinkChanges(as_pairs(added), as_pairs(removed))


@dataclass(frozen=True, eq=False)
class TraceRecord:
    """Observables of one recorded time step.

    `moves` are the arc distances to the next step's positions and are
    None on the final record.  `events` holds the link diff against the
    previous step's graph and is None when the graph did not change
    (always None at t = 0).
    """

    t: int
    positions: np.ndarray
    moves: Optional[np.ndarray]
    W: float
    graph_hash: str
    cut: bool
    events: Optional[LinkChanges]


@dataclass(frozen=True, eq=False)
class Trace:
    """A recorded simulation: params plus one TraceRecord per step."""

    params: CircleParams
    records: tuple[TraceRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    @property
    def last_t(self) -> int:
        return self.records[-1].t

    @property
    def n(self) -> int:
        return self.records[0].positions.size

    def state_at(self, t: int) -> SystemState:
        rec = self.records[t - self.records[0].t]
        if rec.t != t:
            raise IndexError(f"trace records are not contiguous at t={t}")
        return SystemState(rec.t, rec.positions, self.params)


def run(
    state: SystemState,
    horizon: int,
    stop_eps: Optional[float] = None,
    quiet_steps: int = 1,
    tau_nbr: float = 0.0,
) -> Trace:
    """Iterate `step` up to `horizon` times, recording every step.

    Stops early once the largest move stays at or below stop_eps for
    `quiet_steps` consecutive steps (default one step, threshold
    1e-13*p).  The final record carries no moves.  Pass a negative
    stop_eps to disable early stopping.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if quiet_steps < 1:
        raise ValueError("quiet_steps must be at least 1")
    p = state.params.p
    if stop_eps is None:
        stop_eps = 1e-13 * p
    records: list[TraceRecord] = []
    cur = state
    graph = compute_neighbors(cur, tau_nbr)
    changes: Optional[LinkChanges] = None
    quiet = 0
    while True:
        w = capped_sq_sum(cur.positions, p)
        cut = detect_cut(graph).cut
        if len(records) >= horizon or quiet >= quiet_steps:
            records.append(TraceRecord(cur.t, cur.positions, None, w, graph.signature(), cut, changes))
            break
        nxt, moves = step(cur, graph)
        moves.setflags(write=False)
        records.append(TraceRecord(cur.t, cur.positions, moves, w, graph.signature(), cut, changes))
        quiet = quiet + 1 if float(moves.max()) <= stop_eps else 0
        next_graph = compute_neighbors(nxt, tau_nbr)
        changes = _mask_diff(graph.neighbor_mask, next_graph.neighbor_mask)
        cur, graph = nxt, next_graph
    return Trace(params=state.params, records=tuple(records))
