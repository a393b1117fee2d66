"""Element-level kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``STFOSLS_NUMBA`` is not set
to ``0``.  Both paths return identical arrays up to floating-point
reassociation; ``tests/test_kernels.py`` checks that.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def numba_enabled():
    return HAVE_NUMBA and os.environ.get("STFOSLS_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


# ---------------------------------------------------------------------------
# least-squares element matrices
#
# Local unknowns are (w_0, w_1, w_2, phi_0, phi_1, phi_2).  The integrand is
#   (dx w - phi)(dx v - psi) + (dt w + s dx phi)(dt v + s dx psi)
# with s = -1 for the forward heat operator and s = +1 for the backward one.
# ---------------------------------------------------------------------------

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def ls_element_matrices_numpy(areas, grads, sign):
    nE = areas.shape[0]
    gx = grads[:, :, 0]
    gt = grads[:, :, 1]
    c1 = np.zeros((nE, 6))
    c1[:, :3] = gx
    e = np.zeros(6)
    e[3:] = 1.0
    c2 = np.concatenate([gt, sign * gx], axis=1)
    A = areas[:, None, None]
    K = A * (c1[:, :, None] * c1[:, None, :] + c2[:, :, None] * c2[:, None, :])
    cross = c1[:, :, None] * e[None, None, :]
    K -= (A / 3.0) * (cross + np.swapaxes(cross, 1, 2))
    K[:, 3:, 3:] += A * _MASS_REF[None]
    return K


def divergence_vectors_numpy(areas, grads, sign):
    """Integral over K of ``dt v + s dx psi`` against each local basis function."""
    return areas[:, None] * np.concatenate([grads[:, :, 1], sign * grads[:, :, 0]], axis=1)


if HAVE_NUMBA:

    @njit(cache=True)
    def _ls_element_matrices_nb(areas, grads, sign):
        nE = areas.shape[0]
        out = np.zeros((nE, 6, 6))
        c1 = np.zeros(6)
        c2 = np.zeros(6)
        for k in range(nE):
            a = areas[k]
            for i in range(3):
                c1[i] = grads[k, i, 0]
                c1[3 + i] = 0.0
                c2[i] = grads[k, i, 1]
                c2[3 + i] = sign * grads[k, i, 0]
            for i in range(6):
                for j in range(6):
                    out[k, i, j] = a * (c1[i] * c1[j] + c2[i] * c2[j])
            for i in range(3):
                for j in range(3):
                    out[k, i, 3 + j] -= a / 3.0 * c1[i]
                    out[k, 3 + j, i] -= a / 3.0 * c1[i]
                    m = 2.0 if i == j else 1.0
                    out[k, 3 + i, 3 + j] += a * m / 12.0
        return out

    @njit(cache=True)
    def _volume_indicators_nb(areas, grads, elements, f, ud0, u, q, y, xi, p, chi, alpha, lam):
        nE = areas.shape[0]
        out = np.zeros(nE)
        r = np.zeros(3)
        for k in range(nE):
            a = areas[k]
            ux = ut = qx = yx = yt = xix = px = pt = chix = 0.0
            for i in range(3):
                n = elements[k, i]
                gx = grads[k, i, 0]
                gt = grads[k, i, 1]
                ux += u[n] * gx
                ut += u[n] * gt
                qx += q[n] * gx
                yx += y[n] * gx
                yt += y[n] * gt
                xix += xi[n] * gx
                px += p[n] * gx
                pt += p[n] * gt
                chix += chi[n] * gx
            fk = f[k]
            c1 = (yt - xix) / lam - fk
            c3 = ut - qx - fk
            total = a * (c1 * c1 + c3 * c3)
            for term in range(5):
                for i in range(3):
                    n = elements[k, i]
                    if term == 0:
                        r[i] = q[n] - ux
                    elif term == 1:
                        r[i] = xi[n] - yx - chi[n]
                    elif term == 2:
                        r[i] = yt - xix + p[n]
                    elif term == 3:
                        r[i] = alpha * (u[n] - ud0[k]) + pt + chix
                    else:
                        r[i] = px - chi[n]
                s = r[0] + r[1] + r[2]
                total += a / 12.0 * (r[0] * r[0] + r[1] * r[1] + r[2] * r[2] + s * s)
            out[k] = total
        return out


def ls_element_matrices(areas, grads, sign):
    if numba_enabled():
        return _ls_element_matrices_nb(np.ascontiguousarray(areas), np.ascontiguousarray(grads), float(sign))
    return ls_element_matrices_numpy(areas, grads, sign)


def p1_sq_norms(areas, r):
    """Squared L2 norms of P1 functions given by nodal values ``r`` (n_elems, 3)."""
    s = r.sum(axis=1)
    return areas / 12.0 * (np.sum(r * r, axis=1) + s * s)


def volume_indicators_numpy(areas, grads, elements, f, ud0, u, q, y, xi, p, chi, alpha, lam):
    gx = grads[:, :, 0]
    gt = grads[:, :, 1]

    def dx(v):
        return np.sum(v[elements] * gx, axis=1)

    def dt(v):
        return np.sum(v[elements] * gt, axis=1)

    ux, ut, qx = dx(u), dt(u), dx(q)
    yx, yt, xix = dx(y), dt(y), dx(xi)
    px, pt, chix = dx(p), dt(p), dx(chi)
    c1 = (yt - xix) / lam - f
    c3 = ut - qx - f
    total = areas * (c1 * c1 + c3 * c3)
    Q, Xi, P, Chi, U = q[elements], xi[elements], p[elements], chi[elements], u[elements]
    total += p1_sq_norms(areas, Q - ux[:, None])
    total += p1_sq_norms(areas, Xi - yx[:, None] - Chi)
    total += p1_sq_norms(areas, (yt - xix)[:, None] + P)
    total += p1_sq_norms(areas, alpha * (U - ud0[:, None]) + (pt + chix)[:, None])
    total += p1_sq_norms(areas, px[:, None] - Chi)
    return total


def volume_indicators(areas, grads, elements, f, ud0, u, q, y, xi, p, chi, alpha, lam):
    """Per-element sum of the seven volume residual terms of the estimator."""
    if numba_enabled():
        return _volume_indicators_nb(
            np.ascontiguousarray(areas), np.ascontiguousarray(grads), np.ascontiguousarray(elements),
            *(np.ascontiguousarray(a, dtype=float) for a in (f, ud0, u, q, y, xi, p, chi)),
            float(alpha), float(lam),
        )
    return volume_indicators_numpy(areas, grads, elements, f, ud0, u, q, y, xi, p, chi, alpha, lam)
