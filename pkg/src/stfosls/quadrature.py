"""Symmetric quadrature on triangles (Dunavant) and Gauss-Legendre on segments."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import element_gradients


@dataclass(frozen=True)
class QuadRule:
    """Points in barycentric (triangle) or [0,1] (segment) coordinates.

    Weights sum to the reference measure: 1/2 for the triangle, 1 for the segment.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


def _orbit(w, *bary):
    """All distinct permutations of a barycentric triple with weight ``w``."""
    pts = set()
    a = bary
    for p in ((0, 1, 2), (1, 2, 0), (2, 0, 1), (0, 2, 1), (2, 1, 0), (1, 0, 2)):
        pts.add(tuple(a[i] for i in p))
    pts = sorted(pts)
    return pts, [w] * len(pts)


def _s21(w, a):
    return _orbit(w, a, a, 1.0 - 2.0 * a)


def _s111(w, a, b):
    return _orbit(w, a, b, 1.0 - a - b)


# weights sum to 1 here; scaled to the reference area 1/2 in triangle_rule
_DUNAVANT = {
    2: [_s21(1.0 / 3.0, 1.0 / 6.0)],
    4: [
        _s21(0.223381589678011, 0.445948490915965),
        _s21(0.109951743655322, 0.091576213509771),
    ],
    8: [
        ([(1 / 3, 1 / 3, 1 / 3)], [0.144315607677787]),
        _s21(0.095091634267285, 0.459292588292723),
        _s21(0.103217370534718, 0.170569307751760),
        _s21(0.032458497623198, 0.050547228317031),
        _s111(0.027230314174435, 0.263112829634638, 0.008394777409958),
    ],
}


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Symmetric rule on the reference triangle exact up to total ``degree`` (2, 4 or 8)."""
    if degree not in _DUNAVANT:
        raise ValueError(f"unsupported triangle rule degree {degree}; use one of {sorted(_DUNAVANT)}")
    pts, wts = [], []
    for p, w in _DUNAVANT[degree]:
        pts += p
        wts += w
    pts = np.array(pts, dtype=float)
    wts = 0.5 * np.array(wts, dtype=float)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts, degree)


@lru_cache(maxsize=None)
def segment_rule(degree):
    """Gauss-Legendre rule on [0, 1] exact for polynomials up to ``degree`` (<= 9).

    Two points beyond the minimum are used, so smooth data such as
    ``sin(pi s)`` are integrated to about 1e-12 by the degree 9 rule.
    """
    if int(degree) != degree or degree < 0 or degree > 9:
        raise ValueError(f"unsupported segment rule degree {degree}; use 0..9")
    n = int(degree) // 2 + 3
    s, w = np.polynomial.legendre.leggauss(n)
    pts = 0.5 * (s + 1.0)
    wts = 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts, int(degree))


def element_quadrature(mesh, degree):
    """Physical quadrature points ``(n_elems, nq, 2)`` and weights ``(n_elems, nq)``."""
    rule = triangle_rule(degree)
    P = mesh.vertices[mesh.elements]
    areas, _ = element_gradients(mesh)
    xq = np.einsum("qi,kid->kqd", rule.points, P)
    wq = 2.0 * areas[:, None] * rule.weights[None, :]
    return xq, wq


def edge_quadrature(mesh, edges, degree):
    """Physical points ``(n_edges, nq, 2)``, weights and the reference abscissae."""
    rule = segment_rule(degree)
    A = mesh.vertices[edges[:, 0]]
    B = mesh.vertices[edges[:, 1]]
    s = rule.points
    xq = A[:, None, :] * (1 - s)[None, :, None] + B[:, None, :] * s[None, :, None]
    length = np.linalg.norm(B - A, axis=1)
    wq = length[:, None] * rule.weights[None, :]
    return xq, wq, s


def integrate_element(mesh, k, fn, degree=8):
    """Integral of ``fn(x, t)`` over element ``k``."""
    rule = triangle_rule(degree)
    P = mesh.vertices[mesh.elements[k]]
    xq = rule.points @ P
    d1, d2 = P[1] - P[0], P[2] - P[0]
    jac = abs(d1[0] * d2[1] - d1[1] * d2[0])
    vals = np.asarray(fn(xq[:, 0], xq[:, 1]), dtype=float) * np.ones(len(xq))
    return float(jac * np.dot(rule.weights, vals))


def integrate_edge(mesh, edge, fn, degree=5):
    """Integral of ``fn(x, t)`` along the segment between the two nodes of ``edge``."""
    rule = segment_rule(degree)
    A = mesh.vertices[edge[0]]
    B = mesh.vertices[edge[1]]
    xq = A[None, :] * (1 - rule.points)[:, None] + B[None, :] * rule.points[:, None]
    vals = np.asarray(fn(xq[:, 0], xq[:, 1]), dtype=float) * np.ones(len(xq))
    return float(np.linalg.norm(B - A) * np.dot(rule.weights, vals))


def integrate_domain(mesh, fn, degree=8):
    """Integral of ``fn`` over the whole mesh (vectorized)."""
    xq, wq = element_quadrature(mesh, degree)
    vals = np.asarray(fn(xq[..., 0], xq[..., 1]), dtype=float) * np.ones(wq.shape)
    return float(np.sum(wq * vals))
