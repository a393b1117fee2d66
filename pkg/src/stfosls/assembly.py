"""Discrete spaces P0 / S1 / S1_0 and assembly of the saddle and adjoint systems.

Global unknown ordering of the saddle system is ``[f | u | q | y | xi]``:
``f`` is P0, ``u`` and ``y`` are S1 without the lateral nodes, ``q`` and
``xi`` are unconstrained S1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .mesh import element_gradients
from .quadrature import edge_quadrature, element_quadrature

ASSEMBLY_TRACE_DEGREE = 5
DATA_DEGREE = 8


@dataclass(frozen=True)
class DofMap:
    n_nodes: int
    n_elems: int
    lateral_mask: np.ndarray
    free_index: np.ndarray  # node -> position among free nodes, -1 if lateral
    n_free: int

    @property
    def offsets(self):
        nE, nf, nN = self.n_elems, self.n_free, self.n_nodes
        o = {"f": 0, "u": nE, "q": nE + nf, "y": nE + nf + nN, "xi": nE + 2 * nf + nN}
        o["end"] = nE + 2 * nf + 2 * nN
        return o

    @property
    def n_unknowns(self):
        return self.offsets["end"]

    @property
    def ndof_metric(self):
        return self.n_elems + 4 * self.n_nodes

    def free_nodes(self):
        return np.nonzero(~self.lateral_mask)[0]


@dataclass(frozen=True)
class ProblemSpec:
    """One optimal control instance on (0,1) x (0,T).

    Data callables are vectorized: ``ud(x, t)``, ``u0(x)``, ``uTd(x)``.
    """

    alpha: float
    beta: float
    lam: float
    T: float
    u0: Callable
    ud: Callable
    uTd: Callable
    exact_u: Optional[Callable] = None
    exact_f: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or not self.alpha + self.beta > 0:
            raise ValueError(f"need alpha, beta >= 0 and alpha + beta > 0 (got {self.alpha}, {self.beta})")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")


@dataclass
class SolutionFields:
    """Coefficient vectors of a discrete solution; nodal arrays have full length n_nodes."""

    mesh: object
    f: np.ndarray
    u: np.ndarray
    q: np.ndarray
    y: np.ndarray
    xi: np.ndarray
    p: Optional[np.ndarray] = None
    chi: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)


def build_dofmap(mesh):
    lateral = mesh.lateral_nodes()
    free_index = np.full(mesh.n_nodes, -1, dtype=np.int64)
    free = np.nonzero(~lateral)[0]
    free_index[free] = np.arange(len(free))
    lateral = lateral.copy()
    lateral.setflags(write=False)
    free_index.setflags(write=False)
    return DofMap(mesh.n_nodes, mesh.n_elems, lateral, free_index, len(free))


def _check(mesh, dofmap):
    if dofmap.n_nodes != mesh.n_nodes or dofmap.n_elems != mesh.n_elems:
        raise ValueError("dofmap does not belong to this mesh")


def _local_dofs(dofmap, elements, scalar_off, vector_off):
    """Local global indices (n_elems, 6) of a (scalar S1_0, vector S1) pair; -1 marks removed DOFs."""
    fi = dofmap.free_index[elements]
    sc = np.where(fi >= 0, scalar_off + fi, -1)
    return np.concatenate([sc, vector_off + elements], axis=1)


def _edge_mass(mesh, edges):
    """Local 1D P1 mass matrices (n_edges, 2, 2)."""
    L = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
    return L[:, None, None] * (np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0)[None]


def _triplets(rows, cols, vals):
    rows = rows.ravel()
    cols = cols.ravel()
    vals = vals.ravel()
    keep = (rows >= 0) & (cols >= 0)
    return rows[keep], cols[keep], vals[keep]


def _local_grid(r, c):
    """Broadcast local row (n, a) and col (n, b) index arrays to (n, a, b)."""
    return (np.broadcast_to(r[:, :, None], (r.shape[0], r.shape[1], c.shape[1])),
            np.broadcast_to(c[:, None, :], (c.shape[0], r.shape[1], c.shape[1])))


def load_p1(mesh, fn, degree=DATA_DEGREE):
    """Local load vectors ``int_K fn * lambda_i`` (n_elems, 3) and ``int_K fn`` (n_elems,)."""
    from .quadrature import triangle_rule

    xq, wq = element_quadrature(mesh, degree)
    vals = np.asarray(fn(xq[..., 0], xq[..., 1]), dtype=float) * np.ones(wq.shape)
    bary = triangle_rule(degree).points
    loc = np.einsum("kq,qi->ki", wq * vals, bary)
    return loc, np.sum(wq * vals, axis=1)


def load_trace(mesh, edges, fn, degree=ASSEMBLY_TRACE_DEGREE):
    """Edge load vectors ``int_e fn(x) * phi_a`` (n_edges, 2) for spatial data ``fn(x)``."""
    xq, wq, s = edge_quadrature(mesh, edges, degree)
    vals = np.asarray(fn(xq[..., 0]), dtype=float) * np.ones(wq.shape)
    return np.stack([np.sum(wq * vals * (1 - s), axis=1), np.sum(wq * vals * s, axis=1)], axis=1)


def _symmetrize_upper(M):
    M = sp.csr_matrix(M)
    U = sp.triu(M, k=0, format="csr")
    S = U + sp.triu(M, k=1, format="csr").T
    S = sp.csr_matrix(S)
    S.sort_indices()
    return S


def assemble_saddle(mesh, dofmap, problem):
    """Symmetric saddle matrix [[A, Bt^T], [Bt, 0]] and right-hand side.

    Rows/cols follow ``dofmap.offsets``.  The first block tests with
    ``(g, w, phi)``, the second with ``(v, psi)``.
    """
    _check(mesh, dofmap)
    off = dofmap.offsets
    N = off["end"]
    el = mesh.elements
    nE = mesh.n_elems
    areas, grads = element_gradients(mesh)
    rows, cols, vals = [], [], []

    def add(r, c, v):
        r, c, v = _triplets(r, c, v)
        rows.append(r)
        cols.append(c)
        vals.append(v)

    # A block: lambda (f, g) + alpha (u, w) + beta (u(T), w(T))
    add(np.arange(nE), np.arange(nE), problem.lam * areas)
    uidx = np.where(dofmap.free_index[el] >= 0, off["u"] + dofmap.free_index[el], -1)
    if problem.alpha != 0.0:
        Mloc = areas[:, None, None] * _kernels._MASS_REF[None]
        r, c = _local_grid(uidx, uidx)
        add(r, c, problem.alpha * Mloc)
    top, _ = mesh.trace_edges("top")
    bottom, _ = mesh.trace_edges("bottom")
    if problem.beta != 0.0 and len(top):
        tidx = np.where(dofmap.free_index[top] >= 0, off["u"] + dofmap.free_index[top], -1)
        r, c = _local_grid(tidx, tidx)
        add(r, c, problem.beta * _edge_mass(mesh, top))

    # Bt block: rows (v, psi) in [y | xi], cols (f, u, q)
    K = _kernels.ls_element_matrices(areas, grads, -1.0)
    trial = _local_dofs(dofmap, el, off["u"], off["q"])
    test = _local_dofs(dofmap, el, off["y"], off["xi"])
    r, c = _local_grid(test, trial)
    add(r, c, K)
    add(c, r, K)
    div = _kernels.divergence_vectors_numpy(areas, grads, -1.0)
    fcol = np.broadcast_to(np.arange(nE)[:, None], test.shape)
    add(test, fcol, -div)
    add(fcol, test, -div)
    if len(bottom):
        bu = np.where(dofmap.free_index[bottom] >= 0, off["u"] + dofmap.free_index[bottom], -1)
        by = np.where(dofmap.free_index[bottom] >= 0, off["y"] + dofmap.free_index[bottom], -1)
        Mb = _edge_mass(mesh, bottom)
        r, c = _local_grid(by, bu)
        add(r, c, Mb)
        add(c, r, Mb)

    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    M = _symmetrize_upper(M)

    rhs = np.zeros(N)
    if problem.alpha != 0.0:
        loc, _ = load_p1(mesh, problem.ud)
        _scatter(rhs, uidx, problem.alpha * loc)
    if problem.beta != 0.0 and len(top):
        _scatter(rhs, tidx, problem.beta * load_trace(mesh, top, problem.uTd))
    if len(bottom):
        _scatter(rhs, by, load_trace(mesh, bottom, problem.u0))
    return M, rhs


def _scatter(vec, idx, loc):
    idx = idx.ravel()
    loc = loc.ravel()
    keep = idx >= 0
    np.add.at(vec, idx[keep], loc[keep])


def adjoint_offsets(dofmap):
    return {"p": 0, "chi": dofmap.n_free, "end": dofmap.n_free + dofmap.n_nodes}


def assemble_adjoint_ls(mesh, dofmap, u_h, problem):
    """Normal equations of the backward least-squares problem for ``(p, chi)``.

    Unknown ordering is ``[p (free nodes) | chi (all nodes)]``.
    """
    _check(mesh, dofmap)
    u_h = np.asarray(u_h, dtype=float)
    if u_h.shape != (mesh.n_nodes,):
        raise ValueError("u_h must be a nodal vector")
    if np.any(u_h[dofmap.lateral_mask] != 0.0):
        raise ValueError("u_h must vanish at lateral nodes")
    off = adjoint_offsets(dofmap)
    N = off["end"]
    el = mesh.elements
    areas, grads = element_gradients(mesh)
    K = _kernels.ls_element_matrices(areas, grads, 1.0)
    loc = _local_dofs(dofmap, el, off["p"], off["chi"])
    r, c = _local_grid(loc, loc)
    a, b, v = _triplets(r, c, K)
    rows, cols, vals = [a], [b], [v]
    top, _ = mesh.trace_edges("top")
    tidx = np.where(dofmap.free_index[top] >= 0, off["p"] + dofmap.free_index[top], -1)
    if len(top):
        r, c = _local_grid(tidx, tidx)
        a, b, v = _triplets(r, c, _edge_mass(mesh, top))
        rows.append(a)
        cols.append(b)
        vals.append(v)
    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    M = _symmetrize_upper(M)

    rhs = np.zeros(N)
    if problem.alpha != 0.0:
        _, int_ud = load_p1(mesh, problem.ud)
        int_uh = areas / 3.0 * u_h[el].sum(axis=1)
        deriv = np.concatenate([grads[:, :, 1], grads[:, :, 0]], axis=1)
        _scatter(rhs, loc, -problem.alpha * deriv * (int_uh - int_ud)[:, None])
    if problem.beta != 0.0 and len(top):
        trace = np.einsum("eab,eb->ea", _edge_mass(mesh, top), u_h[top]) - load_trace(mesh, top, problem.uTd)
        _scatter(rhs, tidx, problem.beta * trace)
    return M, rhs


def split_saddle(dofmap, x):
    """Unpack a saddle solution vector into full-length fields ``(f, u, q, y, xi)``."""
    off = dofmap.offsets
    free = dofmap.free_nodes()
    u = np.zeros(dofmap.n_nodes)
    y = np.zeros(dofmap.n_nodes)
    u[free] = x[off["u"]:off["q"]]
    y[free] = x[off["y"]:off["xi"]]
    return (x[:off["u"]].copy(), u, x[off["q"]:off["y"]].copy(), y, x[off["xi"]:off["end"]].copy())


def pack_saddle(dofmap, f, u, q, y, xi):
    free = dofmap.free_nodes()
    return np.concatenate([f, u[free], q, y[free], xi])


def split_adjoint(dofmap, x):
    free = dofmap.free_nodes()
    p = np.zeros(dofmap.n_nodes)
    p[free] = x[:dofmap.n_free]
    return p, x[dofmap.n_free:].copy()


def locate(mesh, point):
    """Index of the lowest-numbered element containing ``point`` (closed triangles)."""
    x, t = float(point[0]), float(point[1])
    P = mesh.vertices[mesh.elements]
    areas, grads = element_gradients(mesh)
    d = np.array([x, t])[None, :] - P[:, 0, :]
    l1 = np.einsum("kd,kd->k", d, grads[:, 1, :])
    l2 = np.einsum("kd,kd->k", d, grads[:, 2, :])
    l0 = 1.0 - l1 - l2
    eps = 1e-12
    inside = (l0 >= -eps) & (l1 >= -eps) & (l2 >= -eps)
    hits = np.nonzero(inside)[0]
    if hits.size == 0:
        raise ValueError(f"point {(x, t)} lies outside the mesh")
    k = int(hits[0])
    return k, np.array([l0[k], l1[k], l2[k]])


def evaluate_field(mesh, coeffs, family, point):
    """Value of a P0 or S1 finite element function at ``point = (x, t)``."""
    k, bary = locate(mesh, point)
    coeffs = np.asarray(coeffs, dtype=float)
    if family.upper() == "P0":
        return float(coeffs[k])
    if family.upper() == "S1":
        return float(np.dot(bary, coeffs[mesh.elements[k]]))
    raise ValueError(f"unknown family {family!r}; use 'P0' or 'S1'")


def compute_l2_errors(mesh, solution, problem, degree=DATA_DEGREE):
    """``(||u - u_h||^2, ||f - f_h||^2)`` over Q by elementwise quadrature."""
    if problem.exact_u is None or problem.exact_f is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    from .quadrature import triangle_rule

    xq, wq = element_quadrature(mesh, degree)
    bary = triangle_rule(degree).points
    uh = np.einsum("qi,ki->kq", bary, solution.u[mesh.elements])
    eu = np.asarray(problem.exact_u(xq[..., 0], xq[..., 1]), dtype=float) - uh
    ef = np.asarray(problem.exact_f(xq[..., 0], xq[..., 1]), dtype=float) - solution.f[:, None]
    return float(np.sum(wq * eu * eu)), float(np.sum(wq * ef * ef))
