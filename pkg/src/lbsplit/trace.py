"""Iteration traces shared by every solver, plus CSV serialization.

A trace holds one record per completed outer iteration (and a row 0 for
the initial point).  The CSV schema is

    iter,psi,step_norm2,roc_blocks,branch,ucus_choice,iter_error,rec_error,time_ms

with one extra column step_norm2_<label> per block inserted after
step_norm2 whenever the problem has more than one block.  Per-block
strings (roc_blocks, branch, ucus_choice) use one character per block:
'1'/'0' for the residual check, 'l'earned / 'f'allback for the branch,
'w'/'v' for the averaging choice, '-' when not applicable.

Wall clock times are recorded in memory but written as 0 by default so
that rerunning a seeded experiment reproduces the file byte for byte;
pass include_timing=True to write the measured values instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .errors import InputError

__all__ = ["IterationRecord", "SolverTrace", "TraceSummary", "trace_diagnostics"]

CSV_BASE_HEADER = (
    "iter",
    "psi",
    "step_norm2",
    "roc_blocks",
    "branch",
    "ucus_choice",
    "iter_error",
    "rec_error",
    "time_ms",
)


@dataclass
class IterationRecord:
    t: int
    psi: float
    step_norm2: float
    block_step_norm2: Tuple[float, ...]
    v_step_norm2: Tuple[float, ...]
    roc: str
    branch: str
    ucus: str
    iter_error: Optional[float]
    rec_error: Optional[float]
    time_ms: float
    roc_error_norms: Tuple[float, ...] = ()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return ""
    return format(value, ".17g")


class SolverTrace:
    """Ordered list of IterationRecord with CSV output."""

    def __init__(self, labels: Sequence[str], solver: str = ""):
        self.labels = tuple(labels)
        self.solver = solver
        self.rows: List[IterationRecord] = []
        self.extra = {}

    @property
    def n_blocks(self) -> int:
        return len(self.labels)

    def append(self, record: IterationRecord):
        self.rows.append(record)

    @property
    def iterations(self) -> int:
        """Number of completed iterations (row 0 is the initial point)."""
        return max(0, len(self.rows) - 1)

    def psi_values(self) -> List[float]:
        return [r.psi for r in self.rows]

    def header(self) -> Tuple[str, ...]:
        cols = list(CSV_BASE_HEADER)
        if self.n_blocks > 1:
            at = cols.index("step_norm2") + 1
            cols[at:at] = ["step_norm2_%s" % l for l in self.labels]
        return tuple(cols)

    def to_csv(self, path, include_timing: bool = False):
        cols = self.header()
        lines = [",".join(cols)]
        for r in self.rows:
            values = {
                "iter": str(r.t),
                "psi": _fmt(r.psi),
                "step_norm2": _fmt(r.step_norm2),
                "roc_blocks": r.roc,
                "branch": r.branch,
                "ucus_choice": r.ucus,
                "iter_error": _fmt(r.iter_error),
                "rec_error": _fmt(r.rec_error),
                "time_ms": _fmt(r.time_ms) if include_timing else "0",
            }
            for i, l in enumerate(self.labels):
                values["step_norm2_%s" % l] = _fmt(r.block_step_norm2[i])
            lines.append(",".join(values[c] for c in cols))
        try:
            with open(path, "w", encoding="ascii") as fh:
                fh.write("\n".join(lines) + "\n")
        except OSError as exc:
            raise InputError("cannot write trace %s: %s" % (path, exc)) from exc


@dataclass
class TraceSummary:
    iterations: int
    converged_step: Optional[float]
    cumulative_step_norm2: float
    cumulative_v_step_norm2: float
    fallback_count: int
    learned_count: int
    block_updates: int
    roc_pass_fraction: float
    monotone_violations: List[Tuple[int, float]]
    first_decade_mean_step: float
    last_decade_mean_step: float


def trace_diagnostics(trace: SolverTrace, slack: float = 1e-10) -> TraceSummary:
    """Summarize a trace: descent violations, branch usage, step decay.

    The decade means are the average squared step over the first and last
    ten percent of iterations (at least one iteration each); they feed
    the square summability checks.
    """
    rows = trace.rows[1:]
    psi = trace.psi_values()
    violations = []
    for t in range(1, len(psi)):
        if psi[t] > psi[t - 1] + slack:
            violations.append((t, psi[t] - psi[t - 1]))
    cum_step = sum(r.step_norm2 for r in rows)
    cum_vstep = sum(sum(r.v_step_norm2) for r in rows)
    fallback = sum(r.branch.count("f") for r in rows)
    learned = sum(r.branch.count("l") for r in rows)
    roc_pass = sum(r.roc.count("1") for r in rows)
    roc_total = sum(len(r.roc.replace("-", "")) for r in rows)
    updates = len(rows) * trace.n_blocks
    n = len(rows)
    decade = max(1, n // 10)
    first = [r.step_norm2 for r in rows[:decade]]
    last = [r.step_norm2 for r in rows[-decade:]] if n else []
    return TraceSummary(
        iterations=n,
        converged_step=rows[-1].step_norm2 if rows else None,
        cumulative_step_norm2=cum_step,
        cumulative_v_step_norm2=cum_vstep,
        fallback_count=fallback,
        learned_count=learned,
        block_updates=updates,
        roc_pass_fraction=(roc_pass / roc_total) if roc_total else 0.0,
        monotone_violations=violations,
        first_decade_mean_step=sum(first) / len(first) if first else 0.0,
        last_decade_mean_step=sum(last) / len(last) if last else 0.0,
    )
