"""Trace CSV files, summary tables and the offline decision checker.

A trace is one row per outer iteration or restoration pass with the columns
of :data:`~trfunnel.driver.TRACE_FIELDS`. Floats are written with 17
significant digits, so a trace read back reproduces the logged doubles
exactly and every acceptance decision can be replayed from the file alone.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .driver import RESTORATION, TRACE_FIELDS, TraceRecord, restoration_radius
from .filter import FilterSet, classify_filter_step, filter_acceptable, filter_augment
from .funnel import StepKind, classify_step, init_funnel, update_tr_f_type, update_tr_rejected, update_tr_theta_type
from .params import AlgorithmParams

logger = logging.getLogger(__name__)

INT_FIELDS = ("k", "bb_evals_cumulative")
STR_FIELDS = ("step_type",)
REGRET = "regret"


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    return "%.17g" % value


def format_trace(records, reference=None):
    """Render ``records`` as CSV text.

    Parameters
    ----------
    records : iterable of TraceRecord
    reference : float, optional
        Known optimal objective. When given, a trailing ``regret`` column
        ``f - reference`` is appended.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(TRACE_FIELDS) + ([REGRET] if reference is not None else [])
    writer.writerow(header)
    for rec in records:
        row = [_fmt(v) for v in rec.as_row()]
        if reference is not None:
            row.append(_fmt(rec.f - reference))
        writer.writerow(row)
    return buf.getvalue()


def write_trace(path, records, reference=None):
    """Write a trace CSV to ``path`` (parent directories are not created)."""
    text = format_trace(records, reference)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return Path(path)


def _parse(name, text):
    if name in STR_FIELDS:
        return text
    if name in INT_FIELDS:
        return int(text)
    if text == "":
        if name == "phi":
            return None
        raise ValueError(f"empty value in column {name!r}")
    return float(text)


def parse_trace(text):
    """Parse CSV text produced by :func:`format_trace` into TraceRecords.

    Raises
    ------
    ValueError
        If the header does not start with the trace columns in order.
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header[: len(TRACE_FIELDS)]) != TRACE_FIELDS:
        raise ValueError(f"unexpected trace header: {header}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            values = {name: _parse(name, row[i]) for i, name in enumerate(TRACE_FIELDS)}
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
        out.append(TraceRecord(**values))
    return out


def read_trace(path):
    with open(path, newline="") as fh:
        return parse_trace(fh.read())


# --------------------------------------------------------------------------
# summary tables

TABLE1_COLUMNS = ("problem", "rm_form", "strategy", "status", "final_objective", "external_evaluations", "cpu_time_s")
TABLE2_COLUMNS = ("problem", "rm_form", "strategy", "f_type", "theta_type", "rejected", "restoration", "iterations")


def table_rows(reports):
    """Rows of the two summary tables as lists of python values."""
    t1, t2 = [], []
    for r in reports:
        t1.append([r.problem, r.rm_form, r.strategy, r.status, r.f, r.black_box_evals, r.wall_time_s])
        c = r.counts
        t2.append([r.problem, r.rm_form, r.strategy, c.get("f", 0), c.get("theta", 0),
                   c.get("rejected", 0), c.get(RESTORATION, 0), r.iterations])
    return t1, t2


def _render(columns, rows):
    cells = [[_cell(v) for v in row] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) if cells else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in cells:
        lines.append("  ".join(v.rjust(w) if _numeric(v) else v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(line.rstrip() for line in lines)


def _cell(v):
    if isinstance(v, float):
        return "%.6g" % v
    return str(v)


def _numeric(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def _csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


@dataclass
class Summary:
    """Performance table (objective, evaluations, time) and step-type table."""

    performance: str
    step_types: str
    performance_csv: str
    step_types_csv: str

    def __str__(self):
        return self.performance + "\n\n" + self.step_types


def summarize(reports):
    """Build the two summary tables for a non-empty list of reports.

    Raises
    ------
    ValueError
        If ``reports`` is empty.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("summarize needs at least one report")
    t1, t2 = table_rows(reports)
    return Summary(_render(TABLE1_COLUMNS, t1), _render(TABLE2_COLUMNS, t2),
                   _csv(TABLE1_COLUMNS, t1), _csv(TABLE2_COLUMNS, t2))


# --------------------------------------------------------------------------
# offline replay


@dataclass
class Discrepancy:
    row: int
    check: str
    detail: str

    def __str__(self):
        return f"row {self.row}: {self.check}: {self.detail}"


@dataclass
class ReplayResult:
    rows: int
    discrepancies: list = field(default_factory=list)
    theta_steps: int = 0
    accepted_steps: int = 0

    @property
    def ok(self):
        return not self.discrepancies


def _close(a, b):
    return a == b or abs(a - b) <= 1e-12 * max(abs(a), abs(b))


def check_trace(records, params=None, strategy=None):
    """Replay every logged decision and state update.

    Verifies, row by row: the step classification from the logged scalars;
    that accepted trial values become the next iterate and rejected ones do
    not; the trust-region radius rule; that the sampling radius never grows
    past its bound; that the funnel width is nonincreasing and shrinks only
    on theta-type steps by the exact update with contraction at least
    ``q``; the funnel gate on accepted steps; and monotone evaluation
    counts.

    Parameters
    ----------
    records : list of TraceRecord
    params : AlgorithmParams, optional
        Defaults to the default parameters.
    strategy : {"funnel", "filter"}, optional
        Inferred from the ``phi`` column when omitted.

    Returns
    -------
    ReplayResult
    """
    p = params or AlgorithmParams()
    records = list(records)
    res = ReplayResult(rows=len(records))
    if not records:
        return res
    if strategy is None:
        strategy = "filter" if records[0].phi is None else "funnel"
    bad = res.discrepancies.append

    if strategy == "funnel":
        phi = init_funnel(records[0].theta, p).phi
        flt = None
    else:
        phi = None
        flt = FilterSet([(-math.inf, max(p.phi_min, p.kappa_phi * records[0].theta))], p.gamma_theta, p.gamma_f)

    for i, r in enumerate(records):
        if r.k != i:
            bad(Discrepancy(i, "index", f"k = {r.k}"))
        if strategy == "funnel":
            if r.phi is None or r.phi != phi:
                bad(Discrepancy(i, "phi", f"logged {r.phi}, replayed {phi}"))
                phi = r.phi if r.phi is not None else phi
        elif r.phi is not None:
            bad(Discrepancy(i, "phi", "filter trace with a funnel width"))
        nxt = records[i + 1] if i + 1 < len(records) else None
        if nxt is not None and nxt.bb_evals_cumulative < r.bb_evals_cumulative:
            bad(Discrepancy(i, "evaluations", "cumulative count decreased"))

        if r.step_type == RESTORATION:
            if strategy == "funnel":
                admissible = r.theta_trial <= phi
            else:
                admissible = filter_acceptable(flt, r.f_trial, r.theta_trial)
            accepted = r.theta_trial < r.theta and admissible
            Delta_next = restoration_radius(accepted, r.rho, r.step_norm, r.Delta, p)
            sigma_bound = min(r.sigma, p.Psi * Delta_next)
        else:
            if strategy == "funnel":
                kind = classify_step(r.f, r.f_trial, r.theta, r.theta_trial, phi, r.Delta, p).kind
            else:
                kind = classify_filter_step(flt, r.f, r.f_trial, r.theta, r.theta_trial, r.Delta, p).kind
            if kind.value != r.step_type:
                bad(Discrepancy(i, "classification", f"logged {r.step_type}, replayed {kind.value}"))
                kind = StepKind(r.step_type) if r.step_type in {k.value for k in StepKind} else kind
            accepted = kind is not StepKind.REJECTED
            if kind is StepKind.FTYPE:
                Delta_next = max(p.Delta_min, update_tr_f_type(r.step_norm, r.Delta, p.gamma_e))
                sigma_bound = r.sigma
            elif kind is StepKind.THETATYPE:
                Delta_next = max(p.Delta_min, update_tr_theta_type(r.rho, r.step_norm, r.Delta, p))
                sigma_bound = min(r.sigma, p.Psi * Delta_next)
                res.theta_steps += 1
                if strategy == "funnel":
                    new_phi = (1.0 - p.kappa_f) * r.theta_trial + p.kappa_f * phi
                    if new_phi > p.q * phi * (1.0 + 1e-15):
                        bad(Discrepancy(i, "contraction", f"phi {phi} -> {new_phi} exceeds q = {p.q}"))
                    phi = new_phi
                else:
                    flt = filter_augment(flt, r.f, r.theta)
            else:
                Delta_next = max(p.Delta_min, update_tr_rejected(r.step_norm, p))
                sigma_bound = min(r.sigma, p.Psi * Delta_next)
            if accepted and strategy == "funnel" and not r.theta_trial <= r.phi:
                bad(Discrepancy(i, "gate", f"accepted theta {r.theta_trial} above phi {r.phi}"))
        if accepted:
            res.accepted_steps += 1
        if nxt is None:
            continue
        exp_f, exp_theta = (r.f_trial, r.theta_trial) if accepted else (r.f, r.theta)
        if nxt.f != exp_f or nxt.theta != exp_theta:
            bad(Discrepancy(i + 1, "iterate", f"(f, theta) = ({nxt.f}, {nxt.theta}), expected ({exp_f}, {exp_theta})"))
        if not _close(nxt.Delta, Delta_next):
            bad(Discrepancy(i + 1, "Delta", f"logged {nxt.Delta}, replayed {Delta_next}"))
        sigma_floor = min(p.Delta_min, p.Psi * p.Delta_min)
        if nxt.sigma > sigma_bound * (1.0 + 1e-12) or nxt.sigma < sigma_floor * (1.0 - 1e-12):
            bad(Discrepancy(i + 1, "sigma", f"logged {nxt.sigma}, allowed [{sigma_floor}, {sigma_bound}]"))
        if strategy == "funnel" and nxt.phi is not None and nxt.phi > r.phi:
            bad(Discrepancy(i + 1, "phi monotone", f"{r.phi} -> {nxt.phi}"))
    return res


def iter_violations(results: Iterable[ReplayResult]):
    for res in results:
        yield from res.discrepancies
