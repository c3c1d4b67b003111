"""Reading and writing traces, reports, and matrix exports.

A trace file is JSONL: a header line carrying the schema tag and the
full run configuration, then one line per recorded step.  Numbers are
serialized with Python's shortest-roundtrip float representation, so
parsing a file reproduces the in-memory trace bit for bit and rewriting
it reproduces the file byte for byte.
"""

from __future__ import annotations

import json
from typing import IO, Any, Optional

import numpy as np

from .dynamics import LinkChanges, Trace, TraceRecord
from .errors import TraceCorrupt
from .spectral import TransitionMatrix
from .torus import CircleParams

__all__ = [
    "TRACE_SCHEMA",
    "write_trace",
    "read_trace",
    "record_to_dict",
    "record_from_dict",
    "records_equal",
    "write_report",
    "write_matrix_csv",
]

TRACE_SCHEMA = "hk-torus-trace/1"

_COMPACT = {"separators": (",", ":"), "ensure_ascii": True}


def record_to_dict(rec: TraceRecord) -> dict[str, Any]:
    out: dict[str, Any] = {
        "t": rec.t,
        "positions": [float(x) for x in rec.positions],
        "moves": None if rec.moves is None else [float(x) for x in rec.moves],
        "W": rec.W,
        "graph_hash": rec.graph_hash,
        "cut": rec.cut,
    }
    if rec.events is not None:
        out["events"] = {
            "added": [list(e) for e in sorted(rec.events.added)],
            "removed": [list(e) for e in sorted(rec.events.removed)],
        }
    return out


def record_from_dict(data: dict[str, Any]) -> TraceRecord:
    try:
        events = None
        if "events" in data:
            events = LinkChanges(
                added=tuple((int(a), int(b)) for a, b in data["events"]["added"]),
                removed=tuple((int(a), int(b)) for a, b in data["events"]["removed"]),
            )
        moves = data["moves"]
        if moves is not None:
            moves = np.asarray(moves, dtype=float)
            moves.setflags(write=False)
        positions = np.asarray(data["positions"], dtype=float)
        positions.setflags(write=False)
        return TraceRecord(
            t=int(data["t"]),
            positions=positions,
            moves=moves,
            W=float(data["W"]),
            graph_hash=str(data["graph_hash"]),
            cut=bool(data["cut"]),
            events=events,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceCorrupt(f"malformed trace record: {exc}") from exc


def records_equal(a: TraceRecord, b: TraceRecord) -> bool:
    """Field-by-field equality with exact array comparison."""
    moves_equal = (a.moves is None) == (b.moves is None) and (
        a.moves is None or bool(np.array_equal(a.moves, b.moves))
    )
    return (
        a.t == b.t
        and bool(np.array_equal(a.positions, b.positions))
        and moves_equal
        and a.W == b.W
        and a.graph_hash == b.graph_hash
        and a.cut == b.cut
        and a.events == b.events
    )


def write_trace(trace: Trace, fp: IO[str], config: Optional[dict[str, Any]] = None) -> None:
    """Write the header line and one line per record.

    `config` is embedded verbatim in the header; it must at least state
    the perimeter p and the radius so the file can be read back.
    """
    header_config = dict(config) if config is not None else {}
    header_config.setdefault("p", trace.params.p)
    if "radius" not in header_config:
        header_config.setdefault("r", trace.params.r)
    fp.write(json.dumps({"schema": TRACE_SCHEMA, "config": header_config}, **_COMPACT))
    fp.write("\n")
    for rec in trace.records:
        fp.write(json.dumps(record_to_dict(rec), **_COMPACT))
        fp.write("\n")


def read_trace(fp: IO[str]) -> tuple[Trace, dict[str, Any]]:
    """Parse a trace file; returns the trace and the header config."""
    header_line = fp.readline()
    if not header_line.strip():
        raise TraceCorrupt("empty trace file")
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise TraceCorrupt(f"unparseable header: {exc}") from exc
    if not isinstance(header, dict) or header.get("schema") != TRACE_SCHEMA:
        raise TraceCorrupt(f"expected schema {TRACE_SCHEMA!r}, got {header!r}")
    config = header.get("config", {})
    try:
        radius = config["radius"] if "radius" in config else config["r"]
        params = CircleParams(float(config["p"]), float(radius))
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceCorrupt(f"header config lacks a valid perimeter and radius: {exc}") from exc
    records = []
    for lineno, line in enumerate(fp, start=2):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceCorrupt(f"unparseable record on line {lineno}: {exc}") from exc
        records.append(record_from_dict(data))
    if not records:
        raise TraceCorrupt("trace has a header but no records")
    for prev, cur in zip(records, records[1:]):
        if cur.t != prev.t + 1:
            raise TraceCorrupt(f"records jump from t={prev.t} to t={cur.t}")
    return Trace(params=params, records=tuple(records)), config


def write_report(report: dict[str, Any], fp: IO[str]) -> None:
    """Write a verification report as indented JSON."""
    json.dump(report, fp, indent=2, sort_keys=False)
    fp.write("\n")


def write_matrix_csv(m: TransitionMatrix, fp: IO[str]) -> None:
    """Dense row-major CSV: a metadata header, then one line per row."""
    fp.write("t,kind,n\n")
    fp.write(f"{m.t},{m.kind},{m.n}\n")
    for row in m.entries:
        fp.write(",".join(repr(float(v)) for v in row))
        fp.write("\n")
