"""Run every certification check against one recorded trace.

Each check either passes, fails, or is skipped with a reason when its
preconditions do not hold (a cut on the circle, a radius too large for
the gap-matrix theory, a single agent, or not enough recorded data).
The report is a plain dict-convertible object; a failed check is the
signal that a simulated trace contradicts one of the quantitative
statements this package certifies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

import numpy as np

from .analysis import (
    GraphStabilityReport,
    check_addlink_move,
    check_lyapunov_decrease,
    detect_stability,
    find_left_gainer,
    kinetic_energy,
    move_threshold,
)
from .dynamics import Trace, compute_neighbors, detect_merges
from .errors import HorizonTooShort, InsufficientDecayData, UnknownCheck
from .spectral import (
    POSITIVITY_EPS,
    RateEstimate,
    check_rooted,
    check_velocity_recursion,
    column_sums,
    diff_vector,
    estimate_rate,
    gap_transition_matrix,
)

__all__ = ["CHECKS", "CheckResult", "VerifyReport", "verify_trace"]

CHECKS = (
    "lyapunov",
    "k2-bound",
    "prop3",
    "prop4",
    "perimeter",
    "matrix-identity",
    "column-stochastic",
    "rooted",
    "velocity-recursion",
    "rate",
)

SKIP_CUT = "cut-present"
SKIP_RADIUS = "radius-too-large"
SKIP_NO_DECAY = "no-decay-data"
SKIP_DEGENERATE = "degenerate-n"
SKIP_SHORT = "horizon-too-short"

LYAPUNOV_TOL_FACTOR = 1e-9
K2_TOL_FACTOR = 1e-9
PERIMETER_TOL_FACTOR = 1e-9
MATRIX_TOL_FACTOR = 1e-9
COLUMN_TOL = 1e-9
MIN_R_SQUARED = 0.9


@dataclass(frozen=True)
class CheckResult:
    """Outcome of a single named check."""

    name: str
    status: str  # "pass" | "fail" | "skipped"
    reason: Optional[str] = None
    counters: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"status": self.status}
        if self.reason is not None:
            out["reason"] = self.reason
        if self.counters:
            out["counters"] = self.counters
        return out


def _passed(name: str, **counters: Any) -> CheckResult:
    return CheckResult(name, "pass", counters=counters)


def _failed(name: str, reason: str, **counters: Any) -> CheckResult:
    return CheckResult(name, "fail", reason=reason, counters=counters)


def _skipped(name: str, reason: str, **counters: Any) -> CheckResult:
    return CheckResult(name, "skipped", reason=reason, counters=counters)


@dataclass(frozen=True)
class VerifyReport:
    """All check outcomes for one trace, plus the derived summaries."""

    checks: dict[str, CheckResult]
    stability: GraphStabilityReport
    rate: Optional[RateEstimate]

    @property
    def all_passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks.values())

    def failed(self) -> list[str]:
        return [name for name, c in self.checks.items() if c.status == "fail"]

    def to_dict(self) -> dict[str, Any]:
        rate = None
        if self.rate is not None:
            rate = {
                "rho_hat": self.rate.rho_hat,
                "fit_window": list(self.rate.fit_window),
                "r_squared": self.rate.r_squared,
                "theoretical_bound": self.rate.theoretical_bound,
            }
        return {
            "all_passed": self.all_passed,
            "checks": {name: c.to_dict() for name, c in self.checks.items()},
            "stability": {
                "t0_candidate": self.stability.t0_candidate,
                "stable_window": self.stability.stable_window,
                "final_edge_count": len(self.stability.final_edges),
            },
            "rate": rate,
        }


def _check_lyapunov(trace: Trace) -> CheckResult:
    name = "lyapunov"
    if len(trace) < 2:
        return _skipped(name, SKIP_SHORT)
    records = check_lyapunov_decrease(trace, LYAPUNOV_TOL_FACTOR)
    worst = min(r.drop - 4.0 * r.sum_sq_moves for r in records)
    bad = [r.t for r in records if not r.passed]
    if bad:
        return _failed(name, f"drop short of 4x squared moves at t={bad[0]}", steps=len(records), min_margin=worst)
    return _passed(name, steps=len(records), min_margin=worst)


def _check_k2(trace: Trace) -> CheckResult:
    name = "k2-bound"
    n = trace.n
    acc = kinetic_energy(trace, 2.0)
    bound = n * n / 4.0 + K2_TOL_FACTOR * n * n
    peak = float(acc.prefix.max()) if acc.prefix.size else 0.0
    if peak > bound:
        return _failed(name, f"2-kinetic energy prefix {peak} exceeds {bound}", k2=acc.partial, bound=bound)
    return _passed(name, k2=acc.partial, bound=bound)


def _addition_events(trace: Trace) -> list[int]:
    """Record times t whose graph gained a link relative to t-1."""
    return [rec.t for rec in trace.records[1:] if rec.events is not None and rec.events.added]


def _check_prop3(trace: Trace) -> CheckResult:
    name = "prop3"
    witnesses = 0
    for t in _addition_events(trace):
        g_prev = compute_neighbors(trace.state_at(t - 1))
        g_cur = compute_neighbors(trace.state_at(t))
        if find_left_gainer(g_prev, g_cur) is None:
            return _failed(
                name,
                f"link added between t={t - 1} and t={t} but no agent gained only left neighbors",
                events=witnesses,
            )
        witnesses += 1
    return _passed(name, events=witnesses)


def _check_prop4(trace: Trace) -> CheckResult:
    name = "prop4"
    events = _addition_events(trace)
    checked = 0
    unchecked = 0
    smallest = float("inf")
    for t in events:
        try:
            outcome = check_addlink_move(trace, t - 1)
        except HorizonTooShort:
            unchecked += 1
            continue
        smallest = min(smallest, outcome.max_move)
        if not outcome.passed:
            return _failed(
                name,
                f"largest move {outcome.max_move} after the addition at t={t - 1} "
                f"is not above 1/(6n)={outcome.threshold}",
                events=checked,
            )
        checked += 1
    if events and checked == 0:
        return _skipped(name, SKIP_SHORT, events_unchecked=unchecked)
    counters: dict[str, Any] = {"events": checked, "threshold": move_threshold(trace.n)}
    if unchecked:
        counters["events_unchecked"] = unchecked
    if checked:
        counters["smallest_max_move"] = smallest
    return _passed(name, **counters)


def _check_perimeter(trace: Trace) -> CheckResult:
    name = "perimeter"
    if trace.n == 1:
        return _skipped(name, SKIP_DEGENERATE)
    p = trace.params.p
    tol = PERIMETER_TOL_FACTOR * p
    worst = 0.0
    steps = 0
    for rec in trace.records:
        if rec.cut:
            break
        gaps = diff_vector(trace.state_at(rec.t))
        err = abs(float(gaps.entries.sum()) - p)
        worst = max(worst, err)
        steps += 1
        if err > tol:
            return _failed(name, f"gap sum off by {err} at t={rec.t}", steps=steps, max_error=worst)
    if steps == 0:
        return _skipped(name, SKIP_CUT)
    return _passed(name, steps=steps, max_error=worst)


def _matrix_checks(trace: Trace) -> tuple[CheckResult, CheckResult, CheckResult]:
    id_name, col_name, root_name = "matrix-identity", "column-stochastic", "rooted"
    if not trace.params.strict_sixth:
        skip = lambda nm: _skipped(nm, SKIP_RADIUS)
        return skip(id_name), skip(col_name), skip(root_name)
    p = trace.params.p
    tol_identity = MATRIX_TOL_FACTOR * p
    steps = 0
    max_residual = 0.0
    min_entry = float("inf")
    max_col_err = 0.0
    id_fail = col_fail = root_fail = None
    root_skip_degenerate = trace.n == 1
    for rec, nxt in zip(trace.records, trace.records[1:]):
        if rec.cut:
            break
        state = trace.state_at(rec.t)
        graph = compute_neighbors(state)
        a = gap_transition_matrix(state, graph)
        steps += 1

        gaps_now = diff_vector(state).entries
        gaps_next = diff_vector(trace.state_at(nxt.t)).entries
        residual = float(np.abs(a.entries @ gaps_now - gaps_next).max())
        max_residual = max(max_residual, residual)
        entry_floor = float(a.entries.min())
        min_entry = min(min_entry, entry_floor)
        if id_fail is None and residual > tol_identity:
            id_fail = f"gap map off by {residual} at t={rec.t}"
        if id_fail is None and entry_floor < -POSITIVITY_EPS:
            id_fail = f"negative entry {entry_floor} at t={rec.t}"

        col_err = float(np.abs(column_sums(a) - 1.0).max())
        max_col_err = max(max_col_err, col_err)
        if col_fail is None and col_err > COLUMN_TOL:
            col_fail = f"column sum off by {col_err} at t={rec.t}"

        if not root_skip_degenerate and root_fail is None:
            rooted = check_rooted(a, detect_merges(trace.state_at(nxt.t)))
            if not rooted.rooted:
                root_fail = f"tree edges {rooted.failed_edges} lack positive entries at t={rec.t}"
            elif len(rooted.tree_edges) != trace.n - 1:
                root_fail = f"expected {trace.n - 1} tree edges, got {len(rooted.tree_edges)} at t={rec.t}"

    if steps == 0:
        return (
            _skipped(id_name, SKIP_CUT),
            _skipped(col_name, SKIP_CUT),
            _skipped(root_name, SKIP_DEGENERATE if root_skip_degenerate else SKIP_CUT),
        )
    identity = (
        _failed(id_name, id_fail, steps=steps, max_residual=max_residual, min_entry=min_entry)
        if id_fail
        else _passed(id_name, steps=steps, max_residual=max_residual, min_entry=min_entry)
    )
    column = (
        _failed(col_name, col_fail, steps=steps, max_column_error=max_col_err)
        if col_fail
        else _passed(col_name, steps=steps, max_column_error=max_col_err)
    )
    if root_skip_degenerate:
        rooted_res = _skipped(root_name, SKIP_DEGENERATE)
    elif root_fail:
        rooted_res = _failed(root_name, root_fail, steps=steps)
    else:
        rooted_res = _passed(root_name, steps=steps)
    return identity, column, rooted_res


def _check_velocity(trace: Trace, stability: GraphStabilityReport) -> CheckResult:
    name = "velocity-recursion"
    if not trace.params.strict_sixth:
        return _skipped(name, SKIP_RADIUS)
    t0 = stability.t0_candidate
    base = trace.records[0].t
    if any(rec.cut for rec in trace.records[t0 - base :]):
        return _skipped(name, SKIP_CUT)
    if trace.last_t < t0 + 2:
        return _skipped(name, SKIP_SHORT)
    report = check_velocity_recursion(trace, t0)
    if not report.passed:
        return _failed(
            name,
            f"recursion residual {report.max_residual} above {report.threshold} at t={report.flagged[0]}",
            t0=t0,
            steps=report.residuals.size,
            max_residual=report.max_residual,
        )
    return _passed(name, t0=t0, steps=report.residuals.size, max_residual=report.max_residual)


def _check_rate(trace: Trace, stability: GraphStabilityReport) -> tuple[CheckResult, Optional[RateEstimate]]:
    name = "rate"
    try:
        estimate = estimate_rate(trace, stability.t0_candidate)
    except InsufficientDecayData:
        return _skipped(name, SKIP_NO_DECAY), None
    counters = {
        "rho_hat": estimate.rho_hat,
        "r_squared": estimate.r_squared,
        "theoretical_bound": estimate.theoretical_bound,
        "fit_window": list(estimate.fit_window),
    }
    if not estimate.rho_hat < 1.0:
        return _failed(name, f"fitted rate {estimate.rho_hat} does not contract", **counters), estimate
    if estimate.r_squared < MIN_R_SQUARED:
        return _failed(name, f"log-linear fit r^2 {estimate.r_squared} below {MIN_R_SQUARED}", **counters), estimate
    return _passed(name, **counters), estimate


def verify_trace(trace: Trace, checks: Optional[Iterable[str]] = None) -> VerifyReport:
    """Run the named checks (all of them by default) against a trace."""
    selected = list(CHECKS) if checks is None else list(checks)
    unknown = [c for c in selected if c not in CHECKS]
    if unknown:
        raise UnknownCheck(f"unknown checks: {', '.join(unknown)}; valid names: {', '.join(CHECKS)}")
    stability = detect_stability(trace)
    results: dict[str, CheckResult] = {}

    if "lyapunov" in selected:
        results["lyapunov"] = _check_lyapunov(trace)
    if "k2-bound" in selected:
        results["k2-bound"] = _check_k2(trace)
    if "prop3" in selected:
        results["prop3"] = _check_prop3(trace)
    if "prop4" in selected:
        results["prop4"] = _check_prop4(trace)
    if "perimeter" in selected:
        results["perimeter"] = _check_perimeter(trace)
    if {"matrix-identity", "column-stochastic", "rooted"} & set(selected):
        identity, column, rooted = _matrix_checks(trace)
        if "matrix-identity" in selected:
            results["matrix-identity"] = identity
        if "column-stochastic" in selected:
            results["column-stochastic"] = column
        if "rooted" in selected:
            results["rooted"] = rooted

    rate_estimate: Optional[RateEstimate] = None
    if "velocity-recursion" in selected:
        results["velocity-recursion"] = _check_velocity(trace, stability)
    if "rate" in selected:
        results["rate"], rate_estimate = _check_rate(trace, stability)

    ordered = {name: results[name] for name in CHECKS if name in results}
    return VerifyReport(checks=ordered, stability=stability, rate=rate_estimate)
