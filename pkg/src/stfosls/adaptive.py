"""Dörfler marking and the uniform / adaptive refinement loops."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .assembly import compute_l2_errors
from .estimator import estimator_report
from .mesh import bisect, build_tensor_mesh, refine_uniform
from .solver import DEFAULT_TOL, solve_optimal_control

log = logging.getLogger(__name__)

CSV_COLUMNS = ("level", "ndof", "nelem", "eta_sq", "osc_sq", "ind_sq", "err_u_sq", "err_f_sq")
MODES = ("uniform", "adaptive")


def doerfler_mark(ind_sq, theta):
    """Minimal set of elements carrying a ``theta`` fraction of ``sum(ind_sq)``.

    Indicators are sorted in decreasing order, ties broken by the smaller
    element index, and the shortest prefix reaching the threshold is
    returned as a sorted index array.
    """
    ind_sq = np.asarray(ind_sq, dtype=float)
    if ind_sq.ndim != 1:
        raise ValueError("indicators must be a 1D array")
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    if not np.all(np.isfinite(ind_sq)) or np.any(ind_sq < 0):
        raise ValueError("indicators must be finite and nonnegative")
    total = float(np.sum(ind_sq))
    if theta == 0.0 or total == 0.0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(ind_sq)), -ind_sq))
    csum = np.cumsum(ind_sq[order])
    goal = theta * total
    n = int(np.searchsorted(csum, goal, side="left")) + 1
    if theta == 1.0:
        # cumulative round-off may leave the last partial sum a hair below the total
        n = int(np.count_nonzero(ind_sq))
    n = min(n, len(ind_sq))
    return np.sort(order[:n])


@dataclass
class ConvergenceRecord:
    mode: str
    theta: float
    rows: list = field(default_factory=list)
    status: str = "budget"

    def column(self, name):
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=float)

    def write_csv(self, path):
        write_rows(path, self.rows)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_rows(path, rows):
    """Write the convergence table to a path or an open text stream."""
    if hasattr(path, "write"):
        _write(path, rows)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write(fh, rows)


def _write(fh, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = []
        for rec in reader:
            row = {}
            for c, v in zip(CSV_COLUMNS, rec):
                if c in ("level", "ndof", "nelem"):
                    row[c] = int(v)
                else:
                    row[c] = float(v) if v != "" else None
            rows.append(row)
    return rows


def fit_slope(ndof, values, last=3):
    """Least-squares slope of ``log(values)`` against ``log(ndof)`` over the last rows.

    Returns NaN when fewer than two usable (positive, finite) points remain.
    """
    x = np.asarray(ndof, dtype=float)[-last:]
    y = np.asarray(values, dtype=float)[-last:]
    ok = np.isfinite(y) & (y > 0) & (x > 0)
    if np.count_nonzero(ok) < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def slopes(rows, last=3):
    ndof = [r["ndof"] for r in rows]
    out = {}
    for c in CSV_COLUMNS[3:]:
        vals = [np.nan if r[c] is None else r[c] for r in rows]
        out[c] = fit_slope(ndof, vals, last)
    return out


def run_loop(problem, mode="uniform", theta=0.5, max_dof=200_000, nx=4, nt=4, tol=DEFAULT_TOL,
             mesh=None, max_levels=200, callback: Optional[Callable] = None, mark_edges="all"):
    """Solve, estimate, record and refine until the DOF count exceeds ``max_dof``.

    Uniform mode bisects every element twice per level.  Adaptive mode
    marks all three edges of each Dörfler-marked element (four children)
    and closes the mesh by newest vertex bisection; ``mark_edges=
    "refinement"`` bisects marked elements only once instead.  ``callback(level, mesh,
    solution, report)`` is called after each level is recorded.  Adaptive
    runs whose marking comes out empty stop with status ``"stagnation"``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    if mesh is None:
        mesh = build_tensor_mesh(nx, nt, problem.T)
    if max_dof < mesh.ndof:
        raise ValueError(f"max_dof={max_dof} is below the initial DOF count {mesh.ndof}")
    record = ConvergenceRecord(mode, float(theta))
    has_exact = problem.exact_u is not None and problem.exact_f is not None
    level = 0
    while mesh.ndof <= max_dof:
        sol = solve_optimal_control(mesh, problem, tol)
        rep = estimator_report(mesh, sol, problem)
        eu, ef = compute_l2_errors(mesh, sol, problem) if has_exact else (None, None)
        row = {
            "level": level, "ndof": mesh.ndof, "nelem": mesh.n_elems,
            "eta_sq": rep.eta_sq_total, "osc_sq": rep.osc_sq_total, "ind_sq": rep.ind_sq_total,
            "err_u_sq": eu, "err_f_sq": ef,
        }
        record.rows.append(row)
        log.info("level %d: ndof %d, ind_sq %.4e", level, mesh.ndof, rep.ind_sq_total)
        if callback is not None:
            callback(level, mesh, sol, rep)
        if level + 1 >= max_levels:
            record.status = "max_levels"
            break
        if mode == "uniform":
            mesh = refine_uniform(mesh)
        else:
            marked = doerfler_mark(rep.ind_sq, theta)
            if len(marked) == 0:
                record.status = "stagnation"
                break
            mesh = bisect(mesh, marked, mark_edges)
        level += 1
    return record
