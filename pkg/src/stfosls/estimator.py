"""Computable a posteriori estimator, data oscillations and refinement indicators.

The local indicator of an element K is the sum of nine squared residuals of
the discrete optimality system and the backward least-squares problem.
Seven are volume integrals over K, two are traces on the edges of K lying
on t = 0 and t = T.  Data enter only through their projections: ``u_d`` by
its elementwise mean, ``u_0`` and ``u_Td`` by the L2 projection onto
continuous piecewise linears of the trace mesh.  What the projections miss
is reported separately as oscillation.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .assembly import DATA_DEGREE, _edge_mass, load_p1, load_trace
from .mesh import element_gradients
from .quadrature import edge_quadrature, element_quadrature

TRACE_DEGREE = 9


def project_P0(mesh, fn, degree=DATA_DEGREE):
    """Elementwise means of ``fn(x, t)``."""
    areas, _ = element_gradients(mesh)
    _, integrals = load_p1(mesh, fn, degree)
    return integrals / areas


def project_trace_P1(mesh, fn, which, degree=TRACE_DEGREE):
    """L2 projection of ``fn(x)`` onto continuous P1 on the ``'bottom'`` or ``'top'`` line.

    Returns ``(nodes, values)``: the mesh nodes on that line in increasing
    index order and the nodal values of the projection.
    """
    edges, _ = mesh.trace_edges(which)
    if len(edges) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    nodes, local = np.unique(edges, return_inverse=True)
    local = local.reshape(edges.shape)
    n = len(nodes)
    r = np.repeat(local, 2, axis=1)
    c = np.tile(local, (1, 2))
    M = sp.csc_matrix((_edge_mass(mesh, edges).reshape(-1, 4).ravel(), (r.ravel(), c.ravel())), shape=(n, n))
    rhs = np.zeros(n)
    np.add.at(rhs, local.ravel(), load_trace(mesh, edges, fn, degree).ravel())
    return nodes, spla.spsolve(M, rhs)


def _nodal(mesh, nodes, values):
    out = np.zeros(mesh.n_nodes)
    out[nodes] = values
    return out


def _trace_sq(mesh, edges, owner, nodal):
    """Squared L2 norm of a P1 nodal field along each edge, accumulated on the owners."""
    out = np.zeros(mesh.n_elems)
    if len(edges):
        v = nodal[edges]
        np.add.at(out, owner, np.einsum("ea,eab,eb->e", v, _edge_mass(mesh, edges), v))
    return out


def _trace_osc(mesh, which, fn):
    edges, owner = mesh.trace_edges(which)
    out = np.zeros(mesh.n_elems)
    if len(edges) == 0:
        return out
    nodes, vals = project_trace_P1(mesh, fn, which)
    proj = _nodal(mesh, nodes, vals)
    xq, wq, s = edge_quadrature(mesh, edges, TRACE_DEGREE)
    ph = proj[edges[:, :1]] * (1 - s)[None] + proj[edges[:, 1:]] * s[None]
    d = np.asarray(fn(xq[..., 0]), dtype=float) - ph
    np.add.at(out, owner, np.sum(wq * d * d, axis=1))
    return out


def oscillation_terms(mesh, problem, degree=DATA_DEGREE):
    """Per-element ``||u_d - P0 u_d||_K^2`` plus the two trace oscillations."""
    xq, wq = element_quadrature(mesh, degree)
    vals = np.asarray(problem.ud(xq[..., 0], xq[..., 1]), dtype=float) * np.ones(wq.shape)
    mean = np.sum(wq * vals, axis=1) / np.sum(wq, axis=1)
    d = vals - mean[:, None]
    osc = np.sum(wq * d * d, axis=1)
    osc += _trace_osc(mesh, "top", problem.uTd)
    osc += _trace_osc(mesh, "bottom", problem.u0)
    return osc


def local_indicators(mesh, solution, problem):
    """Per-element squared estimator contributions (nine residual terms)."""
    if solution.p is None or solution.chi is None:
        raise ValueError("solution carries no adjoint pair (p, chi)")
    areas, grads = element_gradients(mesh)
    ud0 = project_P0(mesh, problem.ud) if problem.alpha != 0.0 else np.zeros(mesh.n_elems)
    s = solution
    eta = _kernels.volume_indicators(areas, grads, mesh.elements, s.f, ud0, s.u, s.q, s.y, s.xi,
                                     s.p, s.chi, problem.alpha, problem.lam)

    bottom, bown = mesh.trace_edges("bottom")
    nodes, vals = project_trace_P1(mesh, problem.u0, "bottom")
    eta += _trace_sq(mesh, bottom, bown, s.u - _nodal(mesh, nodes, vals))

    top, town = mesh.trace_edges("top")
    nodes, vals = project_trace_P1(mesh, problem.uTd, "top")
    eta += _trace_sq(mesh, top, town, s.p - problem.beta * (s.u - _nodal(mesh, nodes, vals)))
    return eta


@dataclass(frozen=True)
class EstimatorReport:
    eta_sq: np.ndarray
    osc_sq: np.ndarray

    @property
    def ind_sq(self):
        return self.eta_sq + self.osc_sq

    @property
    def eta_sq_total(self):
        return float(np.sum(self.eta_sq))

    @property
    def osc_sq_total(self):
        return float(np.sum(self.osc_sq))

    @property
    def ind_sq_total(self):
        return self.eta_sq_total + self.osc_sq_total

    def write_csv(self, path):
        """Dump ``element,eta_sq,osc_sq`` rows."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["element", "eta_sq", "osc_sq"])
            for k, (e, o) in enumerate(zip(self.eta_sq, self.osc_sq)):
                w.writerow([k, f"{e:.17g}", f"{o:.17g}"])


def estimator_report(mesh, solution, problem):
    eta = local_indicators(mesh, solution, problem)
    osc = oscillation_terms(mesh, problem)
    # round-off can push a vanishing sum of squares a hair below zero
    return EstimatorReport(np.maximum(eta, 0.0), np.maximum(osc, 0.0))
