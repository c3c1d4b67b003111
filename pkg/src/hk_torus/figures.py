"""Static diagnostic figures rendered straight to image files.

All rendering uses the Agg backend so the functions work in headless
environments; nothing here opens a window.
"""

from __future__ import annotations

from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dynamics import Trace
from .spectral import RateEstimate

__all__ = ["positions_figure", "potential_figure", "decay_figure"]


def positions_figure(trace: Trace, path: str) -> None:
    """Agent trajectories: canonical position against time.

    Wraparound shows as a vertical jump; trajectories are drawn as
    points joined only within consecutive steps to keep jumps readable.
    """
    ts = np.array([rec.t for rec in trace.records])
    pos = np.stack([rec.positions for rec in trace.records])
    p = trace.params.p
    fig, ax = plt.subplots(figsize=(7, 4))
    for i in range(pos.shape[1]):
        col = pos[:, i]
        # break the line where the trajectory wraps across 0
        jumps = np.abs(np.diff(col)) > p / 2
        broken = col.copy()
        broken[1:][jumps] = np.nan
        ax.plot(ts, broken, lw=0.9)
    ax.set_xlabel("t")
    ax.set_ylabel("position")
    ax.set_ylim(0, p)
    ax.set_title(f"trajectories, n={pos.shape[1]}, p={p}, r={trace.params.r}")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def potential_figure(trace: Trace, path: str) -> None:
    """The potential W per step next to the per-step drop lower bound."""
    ts = np.array([rec.t for rec in trace.records])
    w = np.array([rec.W for rec in trace.records])
    move_sq = np.array(
        [float(np.dot(rec.moves, rec.moves)) for rec in trace.records if rec.moves is not None]
    )
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5.5), sharex=True)
    ax1.plot(ts, w, lw=1.2)
    ax1.set_ylabel("W(t)")
    ax1.set_title("potential and its per-step budget")
    if move_sq.size:
        drops = -np.diff(w)
        ax2.plot(ts[:-1], drops, lw=1.0, label="W(t) - W(t+1)")
        ax2.plot(ts[: move_sq.size], 4.0 * move_sq, lw=1.0, ls="--", label="4 x sum of squared moves")
        ax2.set_yscale("symlog", linthresh=1e-12)
        ax2.legend(fontsize=8)
    ax2.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def decay_figure(trace: Trace, path: str, rate: Optional[RateEstimate] = None) -> None:
    """Largest per-step move on a log scale, with the fitted decay line."""
    ts, peaks = [], []
    for rec in trace.records:
        if rec.moves is None:
            break
        peak = float(rec.moves.max())
        if peak > 0:
            ts.append(rec.t)
            peaks.append(peak)
    fig, ax = plt.subplots(figsize=(7, 4))
    if ts:
        ax.semilogy(ts, peaks, ".", ms=3)
    if rate is not None and ts:
        lo, hi = rate.fit_window
        span = np.array([lo, hi], dtype=float)
        anchor_idx = ts.index(lo) if lo in ts else 0
        anchor = np.log(peaks[anchor_idx])
        slope = np.log(rate.rho_hat)
        ax.semilogy(span, np.exp(anchor + slope * (span - lo)), "r-", lw=1.2,
                    label=f"fit rho={rate.rho_hat:.6f}, r2={rate.r_squared:.4f}")
        ax.legend(fontsize=8)
    ax.set_xlabel("t")
    ax.set_ylabel("max move")
    ax.set_title("velocity decay")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
