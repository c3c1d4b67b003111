"""Command line front end.

Subcommands: simulate (run and record a trace), verify (run the
certification checks on a trace file), batch (sweep seeds and summarize
to CSV), unroll (line-lift potential accounting), matrix (export one
transition matrix as CSV), rate (fit the post-freeze decay rate).

Set HK_TORUS_LOG to a logging level name (DEBUG, INFO, ...) to control
verbosity on stderr.
"""

from __future__ import annotations

import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import click
import numpy as np

from . import figures
from .analysis import detect_stability, kinetic_energy, unroll_check
from .dynamics import (
    SystemState,
    Trace,
    compute_neighbors,
    equally_spaced_state,
    initial_state,
    random_state,
    run,
)
from .errors import ConfigInvalid, HKTorusError
from .spectral import averaging_matrix, estimate_rate, gap_transition_matrix
from .traceio import read_trace, write_matrix_csv, write_report, write_trace
from .torus import CircleParams
from .verify import CHECKS, verify_trace

log = logging.getLogger("hk_torus")

INIT_RANDOM = "random-uniform"
INIT_EQUAL = "equally-spaced"


@dataclass
class RunConfig:
    """Everything needed to reproduce one simulation.

    `init` is either one of the named schemes ("random-uniform",
    "equally-spaced") or an explicit comma-separated position list.
    Unset tolerances resolve to their perimeter-scaled defaults.
    """

    n: Optional[int] = None
    p: float = 10.0
    radius: float = 1.0
    seed: int = 0
    init: str = INIT_RANDOM
    horizon: int = 2000
    stop_eps: Optional[float] = None
    tol_merge: Optional[float] = None
    tol_nbr: float = 0.0
    record_matrices: bool = False

    def resolve(self) -> "ResolvedRun":
        errors: dict[str, str] = {}
        explicit: Optional[list[float]] = None
        if self.init not in (INIT_RANDOM, INIT_EQUAL):
            try:
                explicit = [float(tok) for tok in self.init.split(",") if tok.strip()]
            except ValueError:
                errors["init"] = (
                    f"expected {INIT_RANDOM!r}, {INIT_EQUAL!r}, or comma-separated floats, got {self.init!r}"
                )
            if explicit is not None and not explicit:
                errors["init"] = "explicit position list is empty"

        n = self.n
        if explicit:
            if n is None:
                n = len(explicit)
            elif n != len(explicit):
                errors["n"] = f"n={n} does not match the {len(explicit)} explicit positions"
        elif n is None and "init" not in errors:
            errors["n"] = "required unless init lists positions explicitly"
        if n is not None and n < 1:
            errors["n"] = "must be at least 1"

        params: Optional[CircleParams] = None
        try:
            params = CircleParams(self.p, self.radius)
        except (ValueError, HKTorusError) as exc:
            errors["radius" if "radius" in str(exc) else "p"] = str(exc)

        if not 0 <= self.seed < 2**64:
            errors["seed"] = "must fit in an unsigned 64-bit integer"
        if self.horizon < 0:
            errors["horizon"] = "must be nonnegative"
        if self.stop_eps is not None and not np.isfinite(self.stop_eps):
            errors["stop_eps"] = "must be finite"
        if self.tol_merge is not None and self.tol_merge < 0:
            errors["tol_merge"] = "must be nonnegative"
        if self.tol_nbr < 0:
            errors["tol_nbr"] = "must be nonnegative"
        if errors:
            raise ConfigInvalid(errors)
        assert params is not None and n is not None

        if explicit is not None:
            state = initial_state(np.asarray(explicit), params)
        elif self.init == INIT_EQUAL:
            state = equally_spaced_state(params, n)
        else:
            state = random_state(params, n, self.seed)
        stop_eps = 1e-13 * params.p if self.stop_eps is None else self.stop_eps
        tol_merge = 1e-12 * params.p if self.tol_merge is None else self.tol_merge
        header = {
            "n": n,
            "p": params.p,
            "radius": params.r,
            "seed": self.seed,
            "init": self.init,
            "horizon": self.horizon,
            "stop_eps": stop_eps,
            "tol_merge": tol_merge,
            "tol_nbr": self.tol_nbr,
            "record_matrices": self.record_matrices,
        }
        return ResolvedRun(params, state, self.horizon, stop_eps, tol_merge, self.tol_nbr, header)


@dataclass(frozen=True)
class ResolvedRun:
    params: CircleParams
    state: SystemState
    horizon: int
    stop_eps: float
    tol_merge: float
    tol_nbr: float
    header: dict[str, Any]

    def simulate(self) -> Trace:
        return run(self.state, self.horizon, self.stop_eps, tau_nbr=self.tol_nbr)


def _fail(exc: Exception) -> "click.ClickException":
    return click.ClickException(str(exc))


def _config_options(fn):
    decorators = [
        click.option("--n", type=int, default=None, help="Number of agents."),
        click.option("--p", type=float, default=10.0, show_default=True, help="Perimeter."),
        click.option("--radius", type=float, default=1.0, show_default=True, help="Influence radius."),
        click.option("--seed", type=int, default=0, show_default=True, help="Random seed."),
        click.option(
            "--init",
            default=INIT_RANDOM,
            show_default=True,
            help="random-uniform, equally-spaced, or comma-separated positions.",
        ),
        click.option("--horizon", type=int, default=2000, show_default=True, help="Max steps."),
        click.option("--stop-eps", type=float, default=None, help="Early-stop move threshold [1e-13*p]."),
        click.option("--tol-merge", type=float, default=None, help="Merge-detection tolerance [1e-12*p]."),
        click.option("--tol-nbr", type=float, default=0.0, show_default=True, help="Neighbor window slack."),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


@click.group()
def main() -> None:
    """Simulate bounded-confidence averaging on a circle and certify traces."""
    level = os.environ.get("HK_TORUS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr)


@main.command()
@_config_options
@click.option("--record-matrices", is_flag=True, help="Also export per-step gap matrices as CSV.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Trace file [stdout].")
def simulate(out: Optional[str], record_matrices: bool, **kwargs) -> None:
    """Run one simulation and write its trace as JSONL."""
    config = RunConfig(record_matrices=record_matrices, **kwargs)
    try:
        resolved = config.resolve()
    except ConfigInvalid as exc:
        raise _fail(exc)
    if record_matrices and out is None:
        raise click.ClickException("--record-matrices needs --out to name the matrix file")
    trace = resolved.simulate()
    log.info("simulated %d steps (n=%d)", trace.last_t, trace.n)
    if out is None:
        write_trace(trace, sys.stdout, resolved.header)
    else:
        with open(out, "w") as fp:
            write_trace(trace, fp, resolved.header)
    if record_matrices:
        matrix_path = Path(out).with_suffix(Path(out).suffix + ".matrices.csv")
        written = 0
        with open(matrix_path, "w") as fp:
            for rec in trace.records[:-1]:
                if rec.cut or not resolved.params.strict_sixth:
                    continue
                state = trace.state_at(rec.t)
                write_matrix_csv(gap_transition_matrix(state), fp)
                written += 1
        log.info("wrote %d matrices to %s", written, matrix_path)


@main.command()
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--checks", default=None, help=f"Comma-separated subset of: {', '.join(CHECKS)}.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None, help="Report JSON [stdout].")
@click.option("--figures", "figures_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for diagnostic PNGs.")
def verify(trace_file: str, checks: Optional[str], report_path: Optional[str], figures_dir: Optional[str]) -> None:
    """Check a recorded trace; exit nonzero if any check fails."""
    selected = None if checks is None else [c.strip() for c in checks.split(",") if c.strip()]
    try:
        with open(trace_file) as fp:
            trace, _ = read_trace(fp)
        report = verify_trace(trace, selected)
    except HKTorusError as exc:
        raise _fail(exc)
    payload = report.to_dict()
    if report_path is None:
        write_report(payload, sys.stdout)
    else:
        with open(report_path, "w") as fp:
            write_report(payload, fp)
        for name, result in report.checks.items():
            suffix = f" ({result.reason})" if result.reason else ""
            click.echo(f"{name}: {result.status}{suffix}")
    if figures_dir is not None:
        os.makedirs(figures_dir, exist_ok=True)
        stem = Path(trace_file).stem
        figures.positions_figure(trace, os.path.join(figures_dir, f"{stem}-positions.png"))
        figures.potential_figure(trace, os.path.join(figures_dir, f"{stem}-potential.png"))
        figures.decay_figure(trace, os.path.join(figures_dir, f"{stem}-decay.png"), report.rate)
    if not report.all_passed:
        log.error("failed checks: %s", ", ".join(report.failed()))
        sys.exit(1)


BATCH_COLUMNS = (
    "seed,n,all_passed,checks_passed,checks_failed,checks_skipped,failed_names,"
    "t0,stable_window,max_k2,rho_hat,r_squared,error"
)


def _batch_row(args: tuple) -> str:
    """Simulate and verify one seed; always returns a CSV row."""
    seed, n, p, radius, horizon, stop_eps, tol_nbr = args
    try:
        config = RunConfig(n=n, p=p, radius=radius, seed=seed, horizon=horizon,
                           stop_eps=stop_eps, tol_nbr=tol_nbr)
        trace = config.resolve().simulate()
        report = verify_trace(trace)
        statuses = [c.status for c in report.checks.values()]
        k2 = kinetic_energy(trace, 2.0)
        max_k2 = float(k2.prefix.max()) if k2.prefix.size else 0.0
        rho = repr(report.rate.rho_hat) if report.rate is not None else ""
        r2 = repr(report.rate.r_squared) if report.rate is not None else ""
        return ",".join(
            [
                str(seed),
                str(n),
                "true" if report.all_passed else "false",
                str(statuses.count("pass")),
                str(statuses.count("fail")),
                str(statuses.count("skipped")),
                ";".join(report.failed()),
                str(report.stability.t0_candidate),
                str(report.stability.stable_window),
                repr(max_k2),
                rho,
                r2,
                "",
            ]
        )
    except Exception as exc:  # recorded per-seed, never fatal to the sweep
        message = str(exc).replace(",", ";").replace("\n", " ")
        return f"{seed},{n},,,,,,,,,,,{type(exc).__name__}: {message}"


@main.command()
@click.option("--n", type=int, required=True, help="Number of agents.")
@click.option("--p", type=float, default=10.0, show_default=True)
@click.option("--radius", type=float, default=1.0, show_default=True)
@click.option("--horizon", type=int, default=2000, show_default=True)
@click.option("--stop-eps", type=float, default=None)
@click.option("--tol-nbr", type=float, default=0.0)
@click.option("--seeds", default="0:100", show_default=True,
              help="Seed range start:end (end exclusive) or a single count.")
@click.option("--parallelism", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Summary CSV [stdout].")
def batch(n: int, p: float, radius: float, horizon: int, stop_eps: Optional[float],
          tol_nbr: float, seeds: str, parallelism: int, out: Optional[str]) -> None:
    """Simulate and verify a seed sweep; one CSV row per seed."""
    try:
        if ":" in seeds:
            lo_s, hi_s = seeds.split(":", 1)
            lo, hi = int(lo_s), int(hi_s)
        else:
            lo, hi = 0, int(seeds)
    except ValueError:
        raise click.ClickException(f"cannot parse seed range {seeds!r}; expected start:end or a count")
    if parallelism < 1:
        raise click.ClickException("parallelism must be at least 1")
    jobs = [(seed, n, p, radius, horizon, stop_eps, tol_nbr) for seed in range(lo, hi)]
    if parallelism == 1 or len(jobs) <= 1:
        rows = [_batch_row(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_batch_row, jobs))
    rows.sort(key=lambda row: int(row.split(",", 1)[0]))
    text = "\n".join([BATCH_COLUMNS, *rows]) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fp:
            fp.write(text)


@main.command(name="unroll")
@_config_options
@click.option("--copies", "-N", "copies", default="4,8,16", show_default=True,
              help="Comma-separated copy counts, each at least 4.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Report CSV [stdout].")
def unroll_cmd(copies: str, out: Optional[str], **kwargs) -> None:
    """Audit the line-lift potential accounting for several copy counts."""
    config = RunConfig(**kwargs)
    try:
        resolved = config.resolve()
        counts = [int(tok) for tok in copies.split(",") if tok.strip()]
    except ConfigInvalid as exc:
        raise _fail(exc)
    except ValueError:
        raise click.ClickException(f"cannot parse copy counts {copies!r}")
    lines = ["copies,n,v0,v1,w0,w1,r0,r1,s,r0_in_bounds,r1_in_bounds,line_drop,drop_inequality,asserted"]
    try:
        for N in counts:
            rep = unroll_check(resolved.state, N)
            lines.append(",".join([
                str(rep.copies), str(rep.n),
                repr(rep.v0), repr(rep.v1), repr(rep.w0), repr(rep.w1),
                repr(rep.r0), repr(rep.r1), repr(rep.s),
                str(rep.r0_in_bounds).lower(), str(rep.r1_in_bounds).lower(),
                str(rep.line_drop_holds).lower(), str(rep.drop_inequality_holds).lower(),
                str(rep.asserted).lower(),
            ]))
    except HKTorusError as exc:
        raise _fail(exc)
    text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fp:
            fp.write(text)


@main.command()
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--t", "t", type=int, required=True, help="Time step to export.")
@click.option("--kind", type=click.Choice(["gap", "averaging"]), default="gap", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Matrix CSV [stdout].")
def matrix(trace_file: str, t: int, kind: str, out: Optional[str]) -> None:
    """Export the transition matrix at one recorded step."""
    try:
        with open(trace_file) as fp:
            trace, _ = read_trace(fp)
        state = trace.state_at(t)
        if kind == "gap":
            m = gap_transition_matrix(state)
        else:
            m = averaging_matrix(compute_neighbors(state))
    except (HKTorusError, IndexError) as exc:
        raise _fail(exc)
    if out is None:
        write_matrix_csv(m, sys.stdout)
    else:
        with open(out, "w") as fp:
            write_matrix_csv(m, fp)


@main.command()
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--t0", type=int, default=None, help="Freeze time [detected automatically].")
@click.option("--figure", "figure_path", type=click.Path(dir_okay=False), default=None,
              help="Also render the decay plot.")
def rate(trace_file: str, t0: Optional[int], figure_path: Optional[str]) -> None:
    """Fit the geometric decay rate of the post-freeze velocities."""
    try:
        with open(trace_file) as fp:
            trace, _ = read_trace(fp)
        start = detect_stability(trace).t0_candidate if t0 is None else t0
        estimate = estimate_rate(trace, start)
    except HKTorusError as exc:
        raise _fail(exc)
    click.echo(f"t0: {start}")
    click.echo(f"rho_hat: {estimate.rho_hat!r}")
    click.echo(f"fit_window: {estimate.fit_window[0]}..{estimate.fit_window[1]}")
    click.echo(f"r_squared: {estimate.r_squared!r}")
    click.echo(f"theoretical_bound: {estimate.theoretical_bound!r}")
    if figure_path is not None:
        figures.decay_figure(trace, figure_path, estimate)


if __name__ == "__main__":
    main()
