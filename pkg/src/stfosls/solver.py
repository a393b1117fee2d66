"""Sparse solves of the saddle and adjoint systems.

``solve_symmetric`` is a general sparse direct solve.  ``solve_saddle``
exploits the block structure of the optimality system: the least-squares
block coupling ``(u, q)`` with ``(y, xi)`` is symmetric positive definite
and the control block is diagonal, so the system reduces to an SPD problem
for the control alone, solved by preconditioned CG.
"""
from __future__ import annotations

import logging
import time

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ordering import nested_dissection
from .assembly import (
    SolutionFields,
    assemble_adjoint_ls,
    assemble_saddle,
    build_dofmap,
    split_adjoint,
    split_saddle,
)

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    """Raised when a solve fails or misses the residual bound."""

    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (relative residual {residual:.3e})")
        self.residual = residual


def relative_residual(matrix, x, rhs):
    r = matrix @ x - rhs
    return float(np.linalg.norm(r) / max(np.linalg.norm(rhs), np.finfo(float).tiny))


def _validate(matrix, rhs):
    n = matrix.shape[0]
    if matrix.shape != (n, n) or rhs.shape != (n,):
        raise ValueError(f"shape mismatch: matrix {matrix.shape}, rhs {rhs.shape}")
    if not (np.all(np.isfinite(matrix.data)) and np.all(np.isfinite(rhs))):
        raise SolverError("non-finite entries in matrix or right-hand side")


class _SPDFactor:
    """Pivot-free LU of a symmetric positive definite matrix.

    With ``coords`` (one point per unknown) a geometric nested dissection
    order is used; otherwise SuperLU's minimum degree on ``A^T + A``.
    """

    def __init__(self, matrix, coords=None):
        matrix = sp.csc_matrix(matrix)
        opts = {"SymmetricMode": True}
        if coords is None:
            self.perm = None
            self.lu = spla.splu(matrix, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options=opts)
        else:
            self.perm = nested_dissection(coords, matrix)
            Ap = sp.csc_matrix(matrix[self.perm][:, self.perm])
            self.lu = spla.splu(Ap, permc_spec="NATURAL", diag_pivot_thresh=0.0, options=opts)

    def solve(self, b):
        if self.perm is None:
            return self.lu.solve(b)
        x = np.empty_like(b)
        x[self.perm] = self.lu.solve(b[self.perm])
        return x


def _refine(matrix, rhs, x, solve, tol, steps):
    res = relative_residual(matrix, x, rhs)
    for _ in range(steps):
        if not np.isfinite(res) or res <= tol:
            break
        x = x + solve(rhs - matrix @ x)
        res = relative_residual(matrix, x, rhs)
    return x, res


def solve_symmetric(matrix, rhs, tol=DEFAULT_TOL, max_refine=3, coords=None):
    """Solve ``matrix @ x = rhs`` for a sparse symmetric, possibly indefinite matrix.

    A pivot-free symmetric factorization is tried first; if it breaks down
    or misses ``tol``, SuperLU with COLAMD ordering and partial pivoting is
    used.  Iterative refinement is applied in both cases.  ``coords`` (one
    point per unknown) enables a nested dissection ordering.
    """
    matrix = sp.csc_matrix(matrix)
    rhs = np.asarray(rhs, dtype=float)
    _validate(matrix, rhs)
    n = matrix.shape[0]
    if n == 0 or not np.any(rhs):
        return np.zeros(n)
    res = np.inf
    try:
        lu = _SPDFactor(matrix, coords)
        x, res = _refine(matrix, rhs, lu.solve(rhs), lu.solve, tol, max_refine)
    except RuntimeError:
        pass
    if not res <= tol:
        try:
            lu = spla.splu(matrix, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc
        x, res = _refine(matrix, rhs, lu.solve(rhs), lu.solve, tol, max_refine)
    if not res <= tol:
        raise SolverError("solve did not reach the residual tolerance", res)
    return x


def solve_saddle(matrix, rhs, dofmap, tol=DEFAULT_TOL, max_refine=3, coords=None):
    """Block solve of the optimality system via the reduced control problem.

    With blocks ``D`` (control mass), ``A`` (tracking on ``w = (u, q)``),
    ``B`` (least-squares Gram, SPD) and ``C`` (control coupling):

        D f + C^T Y = b_f,   A w + B Y = b_w,   C f + B w = b_Y,

    eliminating ``w = B^-1 (b_Y - C f)`` and ``Y = B^-1 (b_w - A w)`` leaves
    ``(D + C^T B^-1 A B^-1 C) f = rhs_f`` which is SPD.  Falls back to
    :func:`solve_symmetric` if the residual bound is not met.  ``coords``
    gives one point per ``(y, xi)`` unknown for the nested dissection order.
    """
    matrix = sp.csr_matrix(matrix)
    rhs = np.asarray(rhs, dtype=float)
    _validate(matrix, rhs)
    if not np.any(rhs):
        return np.zeros(matrix.shape[0])
    off = dofmap.offsets
    sf = slice(0, off["u"])
    sw = slice(off["u"], off["y"])
    sy = slice(off["y"], off["end"])
    D = matrix[sf, sf].diagonal()
    A = matrix[sw, sw]
    B = matrix[sy, sw]
    C = matrix[sy, sf]
    if matrix[sf, sw].nnz or matrix[sy, sy].nnz or np.any(D <= 0):
        log.debug("unexpected block structure, using general solver")
        return solve_symmetric(matrix, rhs, tol, max_refine)
    try:
        lu = _SPDFactor(B, coords)
    except RuntimeError:
        return solve_symmetric(matrix, rhs, tol, max_refine)
    Bs = lu.solve
    CT = C.T.tocsr()

    def reduced(b):
        bf, bw, by = b[sf], b[sw], b[sy]
        g = bf - CT @ Bs(bw - A @ Bs(by))

        def hess(v):
            return D * v + CT @ Bs(A @ Bs(C @ v))

        H = spla.LinearOperator((len(D), len(D)), matvec=hess, dtype=float)
        P = spla.LinearOperator((len(D), len(D)), matvec=lambda v: v / D, dtype=float)
        f, info = spla.cg(H, g, x0=g / D, rtol=1e-14, atol=0.0, maxiter=500, M=P)
        w = Bs(by - C @ f)
        y = Bs(bw - A @ w)
        return np.concatenate([f, w, y])

    x, res = _refine(matrix, rhs, reduced(rhs), reduced, tol, max_refine)
    if not res <= tol:
        log.debug("reduced solve residual %.2e, using general solver", res)
        return solve_symmetric(matrix, rhs, tol, max_refine)
    return x


def solve_optimal_control(mesh, problem, tol=DEFAULT_TOL):
    """Solve the discrete optimality system and the adjoint least-squares problem."""
    dofmap = build_dofmap(mesh)
    t0 = time.perf_counter()
    M, b = assemble_saddle(mesh, dofmap, problem)
    t1 = time.perf_counter()
    coords = np.vstack([mesh.vertices[dofmap.free_nodes()], mesh.vertices])
    x = solve_saddle(M, b, dofmap, tol, coords=coords)
    t2 = time.perf_counter()
    f, u, q, y, xi = split_saddle(dofmap, x)
    residual = relative_residual(M, x, b) if np.any(b) else 0.0
    n_unknowns = M.shape[0]
    del M, x  # release before the second factorization on large meshes

    Ma, ba = assemble_adjoint_ls(mesh, dofmap, u, problem)
    xa = solve_symmetric(Ma, ba, tol, coords=coords)
    p, chi = split_adjoint(dofmap, xa)
    t3 = time.perf_counter()
    info = {
        "residual": residual,
        "adjoint_residual": relative_residual(Ma, xa, ba) if np.any(ba) else 0.0,
        "n_unknowns": n_unknowns,
        "t_assemble": t1 - t0,
        "t_solve": t2 - t1,
        "t_adjoint": t3 - t2,
    }
    log.debug("solve: %d unknowns, assemble %.2fs, solve %.2fs", n_unknowns, t1 - t0, t2 - t1)
    return SolutionFields(mesh, f, u, q, y, xi, p, chi, info)
