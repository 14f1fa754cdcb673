"""Trace and summary sinks."""
import csv
import logging
from typing import IO, Iterable, List

import yaml

from .driver import SolveResult, SolveTrace, TraceRecord

TRACE_HEADER = ["j", "k", "R", "Rsharp", "f", "t", "obj", "rho", "rhotilde",
                "gstar_norm", "step_norm", "kind", "planes"]


def _fmt(v: float) -> str:
    # repr round-trips exactly
    return repr(float(v))


def trace_row(r: TraceRecord) -> List[str]:
    return [
        str(r.j), str(r.k), _fmt(r.R), _fmt(r.R_sharp), _fmt(r.f), _fmt(r.t), _fmt(r.obj),
        _fmt(r.rho), _fmt(r.rho_tilde), _fmt(r.gstar_norm), _fmt(r.step_norm),
        r.kind.value, str(r.planes),
    ]


def write_trace_rows(stream: IO[str], records: Iterable[TraceRecord]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for r in records:
        writer.writerow(trace_row(r))


def write_trace(path: str, trace: SolveTrace) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        write_trace_rows(f, trace)
    logging.info("trace written to %s (%d rows)", path, len(trace))


def summary_record(result: SolveResult, problem: str = "", seed: int = 0) -> dict:
    record = {"problem": problem, "seed": int(seed)}
    record.update(result.summary())
    return record


def write_summary(path: str, result: SolveResult, problem: str = "", seed: int = 0) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(summary_record(result, problem, seed), f, sort_keys=False)
    logging.info("summary written to %s", path)
