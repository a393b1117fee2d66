"""Simplicial meshes of the space-time cylinder (0,1) x (0,T).

Points are stored as ``(x, t)``.  Every element is a vertex triple
``(v0, v1, v2)`` in counter-clockwise order whose refinement edge is
``(v0, v1)``.  Refinement is newest vertex bisection with closure.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

LATERAL, BOTTOM, TOP = 0, 1, 2
EDGE_LABEL_NAMES = {LATERAL: "lateral", BOTTOM: "bottom", TOP: "top"}


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Mesh:
    """Immutable triangulation of the space-time cylinder.

    Attributes
    ----------
    vertices : (n_nodes, 2) float array of ``(x, t)`` coordinates
    elements : (n_elems, 3) int array, refinement edge ``(v0, v1)``
    T : final time
    """

    vertices: np.ndarray
    elements: np.ndarray
    T: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _readonly(np.asarray(self.vertices, dtype=float)))
        object.__setattr__(self, "elements", _readonly(np.asarray(self.elements, dtype=np.int64)))

    @property
    def n_nodes(self):
        return self.vertices.shape[0]

    @property
    def n_elems(self):
        return self.elements.shape[0]

    @property
    def tol(self):
        return 1e-12 * max(1.0, self.T)

    @property
    def ndof(self):
        """Degrees-of-freedom metric: elements + 4 * nodes (Dirichlet nodes included)."""
        return self.n_elems + 4 * self.n_nodes

    def signed_areas(self):
        if "areas" not in self._cache:
            p = self.vertices[self.elements]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = _readonly(0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]))
        return self._cache["areas"]

    def edge_data(self):
        """Unique edges and the element-to-edge map.

        Returns ``(edges, element2edges, counts)`` where ``edges`` holds
        sorted node pairs, ``element2edges[k, j]`` is the edge opposite to
        local vertex ``(j + 2) % 3``, i.e. local edges are ``(v0,v1)``,
        ``(v1,v2)``, ``(v2,v0)``.
        """
        if "edges" not in self._cache:
            el = self.elements
            local = np.stack([el[:, [0, 1]], el[:, [1, 2]], el[:, [2, 0]]], axis=1).reshape(-1, 2)
            local = np.sort(local, axis=1)
            edges, inv, counts = np.unique(local, axis=0, return_inverse=True, return_counts=True)
            self._cache["edges"] = (
                _readonly(edges),
                _readonly(inv.reshape(-1, 3)),
                _readonly(counts),
            )
        return self._cache["edges"]

    def boundary_edges(self):
        """Boundary edges with owning element and label.

        Returns ``(edges, owner, labels)``; ``edges`` keeps the orientation
        inherited from the owning element.
        """
        if "bnd" not in self._cache:
            edges, e2e, counts = self.edge_data()
            flat = e2e.ravel()
            on_bnd = counts[flat] == 1
            pos = np.nonzero(on_bnd)[0]
            owner = pos // 3
            loc = pos % 3
            el = self.elements[owner]
            a = el[np.arange(len(pos)), loc]
            b = el[np.arange(len(pos)), (loc + 1) % 3]
            bedges = np.stack([a, b], axis=1)
            labels = self._classify(bedges)
            self._cache["bnd"] = (_readonly(bedges), _readonly(owner), _readonly(labels))
        return self._cache["bnd"]

    def _classify(self, bedges):
        p = self.vertices
        xa, ta = p[bedges[:, 0]].T
        xb, tb = p[bedges[:, 1]].T
        tol = self.tol
        labels = np.full(len(bedges), -1, dtype=np.int64)
        lat = ((np.abs(xa) <= tol) & (np.abs(xb) <= tol)) | (
            (np.abs(xa - 1) <= tol) & (np.abs(xb - 1) <= tol)
        )
        bot = (np.abs(ta) <= tol) & (np.abs(tb) <= tol)
        top = (np.abs(ta - self.T) <= tol) & (np.abs(tb - self.T) <= tol)
        labels[lat] = LATERAL
        labels[bot] = BOTTOM
        labels[top] = TOP
        return labels

    def edge_labels(self):
        """Mapping from sorted boundary node pairs to ``'lateral'|'bottom'|'top'``."""
        bedges, _, labels = self.boundary_edges()
        return {
            (int(min(a, b)), int(max(a, b))): EDGE_LABEL_NAMES.get(int(lab), "interior?")
            for (a, b), lab in zip(bedges, labels)
        }

    def trace_edges(self, which):
        """Boundary edges on ``t = 0`` (``'bottom'``) or ``t = T`` (``'top'``) with their owners."""
        code = {"bottom": BOTTOM, "top": TOP}[which]
        bedges, owner, labels = self.boundary_edges()
        sel = labels == code
        return bedges[sel], owner[sel]

    def lateral_nodes(self):
        x = self.vertices[:, 0]
        return (np.abs(x) <= self.tol) | (np.abs(x - 1.0) <= self.tol)


def build_tensor_mesh(nx, nt, T=1.0):
    """Kuhn-split tensor mesh of ``nx`` by ``nt`` rectangles on (0,1) x (0,T).

    Each cell with bottom points ``p1', p2'`` and top points ``p1'', p2''``
    (ordered by spatial vertex index) becomes ``conv(p1', p2', p1'')`` and
    ``conv(p2', p1'', p2'')``.
    """
    if int(nx) != nx or int(nt) != nt or nx < 1 or nt < 1:
        raise ValueError(f"nx and nt must be positive integers, got nx={nx}, nt={nt}")
    if not T > 0:
        raise ValueError(f"final time must be positive, got T={T}")
    nx, nt = int(nx), int(nt)
    xs = np.linspace(0.0, 1.0, nx + 1)
    ts = np.linspace(0.0, T, nt + 1)
    X, Tt = np.meshgrid(xs, ts)
    vertices = np.stack([X.ravel(), Tt.ravel()], axis=1)

    i, k = np.meshgrid(np.arange(nx), np.arange(nt))
    i, k = i.ravel(), k.ravel()
    p1a = k * (nx + 1) + i
    p2a = p1a + 1
    p1b = p1a + (nx + 1)
    p2b = p1b + 1
    tris = np.empty((2 * nx * nt, 3), dtype=np.int64)
    tris[0::2] = np.stack([p1a, p2a, p1b], axis=1)
    tris[1::2] = np.stack([p2a, p1b, p2b], axis=1)
    tris = _assign_refinement_edges(vertices, tris)
    return Mesh(vertices, tris, float(T))


def _assign_refinement_edges(vertices, tris):
    """Rotate each triangle so its longest edge comes first and orientation is positive.

    Length ties are broken by the lexicographically smallest (min, max) node pair.
    """
    tris = np.asarray(tris, dtype=np.int64)
    out = np.empty_like(tris)
    for k, tri in enumerate(tris):
        best = None
        for j in range(3):
            a, b, c = tri[j], tri[(j + 1) % 3], tri[(j + 2) % 3]
            length = float(np.sum((vertices[a] - vertices[b]) ** 2))
            key = (-length, min(a, b), max(a, b))
            if best is None or key < best[0]:
                best = (key, (a, b, c))
        out[k] = best[1]
    p = vertices[out]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    out[neg] = out[neg][:, [1, 0, 2]]
    return out


def mesh_from_arrays(vertices, elements, T):
    """Build a mesh from raw arrays, choosing refinement edges by the longest-edge rule."""
    vertices = np.asarray(vertices, dtype=float)
    return Mesh(vertices, _assign_refinement_edges(vertices, elements), float(T))


@dataclass(frozen=True)
class Refinement:
    """Bookkeeping returned by :func:`bisect_with_history`.

    ``parent`` maps each new element to its parent element index;
    ``new_vertex_parents`` gives, for vertices appended by the refinement,
    the two endpoints of the bisected edge.
    """

    mesh: Mesh
    parent: np.ndarray
    new_vertex_parents: np.ndarray


def bisect(mesh, marked, mark_edges="refinement"):
    """Newest vertex bisection of the ``marked`` elements plus conforming closure.

    With ``mark_edges="refinement"`` each marked element is bisected once
    (at its refinement edge).  With ``"all"`` its three edges are marked,
    so it is split into four children as in the ``bisec3`` variant.
    """
    return bisect_with_history(mesh, marked, mark_edges).mesh


def bisect_with_history(mesh, marked, mark_edges="refinement"):
    if mark_edges not in ("refinement", "all"):
        raise ValueError(f"mark_edges must be 'refinement' or 'all', got {mark_edges!r}")
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked,
                                  dtype=np.int64))
    nE = mesh.n_elems
    if marked.size and (marked.min() < 0 or marked.max() >= nE):
        raise IndexError(f"marked element index out of range [0, {nE})")
    if marked.size == 0:
        return Refinement(mesh, np.arange(nE), np.empty((0, 2), dtype=np.int64))

    edges, e2e, _ = mesh.edge_data()
    flag = np.zeros(len(edges), dtype=bool)
    flag[e2e[marked, 0] if mark_edges == "refinement" else e2e[marked].ravel()] = True
    # closure: any marked edge forces the element's refinement edge
    while True:
        need = flag[e2e].any(axis=1) & ~flag[e2e[:, 0]]
        if not need.any():
            break
        flag[e2e[need, 0]] = True

    nV = mesh.n_nodes
    edge_ids = np.nonzero(flag)[0]
    new_index = np.full(len(edges), -1, dtype=np.int64)
    new_index[edge_ids] = nV + np.arange(len(edge_ids))
    mids = 0.5 * (mesh.vertices[edges[edge_ids, 0]] + mesh.vertices[edges[edge_ids, 1]])
    vertices = np.vstack([mesh.vertices, mids])

    el = mesh.elements
    v0, v1, v2 = el[:, 0], el[:, 1], el[:, 2]
    a = new_index[e2e[:, 0]]
    b = new_index[e2e[:, 1]]
    c = new_index[e2e[:, 2]]
    has_a, has_b, has_c = a >= 0, b >= 0, c >= 0

    keep = ~has_a
    one = has_a & ~has_b & ~has_c
    left = has_a & has_b & ~has_c
    right = has_a & ~has_b & has_c
    both = has_a & has_b & has_c

    # children per case; kept in parent order for determinism
    nchild = keep * 1 + one * 2 + (left | right) * 3 + both * 4
    start = np.concatenate([[0], np.cumsum(nchild)[:-1]])
    total = int(nchild.sum())
    new_el = np.empty((total, 3), dtype=np.int64)
    parent = np.repeat(np.arange(nE), nchild)

    def put(mask, offset, cols):
        idx = start[mask] + offset
        new_el[idx] = np.stack([col[mask] for col in cols], axis=1)

    put(keep, 0, (v0, v1, v2))
    put(one, 0, (v2, v0, a))
    put(one, 1, (v1, v2, a))
    put(left, 0, (v2, v0, a))
    put(left, 1, (a, v1, b))
    put(left, 2, (v2, a, b))
    put(right, 0, (a, v2, c))
    put(right, 1, (v0, a, c))
    put(right, 2, (v1, v2, a))
    put(both, 0, (a, v2, c))
    put(both, 1, (v0, a, c))
    put(both, 2, (a, v1, b))
    put(both, 3, (v2, a, b))

    return Refinement(Mesh(vertices, new_el, mesh.T), parent, edges[edge_ids].copy())


def refine_uniform(mesh, sweeps=1):
    """Mark every element and bisect twice per sweep (halves the mesh size)."""
    for _ in range(2 * sweeps):
        mesh = bisect(mesh, np.arange(mesh.n_elems))
    return mesh


def prolong_nodal(refinement, values):
    """Nodal values of a P1 function on the refined mesh (exact, meshes are nested)."""
    values = np.asarray(values, dtype=float)
    nvp = refinement.new_vertex_parents
    return np.concatenate([values, 0.5 * (values[nvp[:, 0]] + values[nvp[:, 1]])])


def prolong_elementwise(refinement, values):
    """Element values of a P0 function on the refined mesh."""
    return np.asarray(values)[refinement.parent]


@dataclass(frozen=True)
class Violation:
    kind: str
    edge: tuple
    detail: str = ""

    def __str__(self):
        return f"{self.kind} on edge {self.edge}: {self.detail}"


def check_admissible(mesh):
    """List conformity violations; an empty list means the mesh is admissible."""
    out = []
    V = mesh.vertices
    areas = mesh.signed_areas()
    for k in np.nonzero(areas <= 0)[0]:
        out.append(Violation("orientation", tuple(int(i) for i in mesh.elements[k]),
                             f"element {k} has signed area {areas[k]:.3e}"))
    el = mesh.elements
    if np.any(el < 0) or np.any(el >= mesh.n_nodes) or np.any(
        (el[:, 0] == el[:, 1]) | (el[:, 1] == el[:, 2]) | (el[:, 0] == el[:, 2])
    ):
        out.append(Violation("index", (), "element vertex indices invalid or repeated"))
        return out

    edges, _, counts = mesh.edge_data()
    for e in np.nonzero(counts > 2)[0]:
        out.append(Violation("overshared", tuple(int(i) for i in edges[e]),
                             f"shared by {counts[e]} elements"))

    # vertices lying strictly inside an edge
    A, B = V[edges[:, 0]], V[edges[:, 1]]
    mid = 0.5 * (A + B)
    half = 0.5 * np.linalg.norm(B - A, axis=1)
    tree = cKDTree(V)
    hanging = []
    for e, cand in enumerate(tree.query_ball_point(mid, half * (1 + 1e-9))):
        if len(cand) <= 2:
            continue
        d = B[e] - A[e]
        for v in cand:
            if v == edges[e, 0] or v == edges[e, 1]:
                continue
            w = V[v] - A[e]
            cross = d[0] * w[1] - d[1] * w[0]
            s = np.dot(w, d) / np.dot(d, d)
            if abs(cross) <= 1e-12 * np.dot(d, d) and 0 < s < 1:
                hanging.append((e, v))
    hanging_edges = {e for e, _ in hanging}
    for e, v in hanging:
        out.append(Violation("hanging node", tuple(int(i) for i in edges[e]),
                             f"vertex {v} lies inside the edge"))

    # unmatched edges in the interior of Q, unless already explained by a hanging node
    tol = mesh.tol
    x = mid[:, 0]
    t = mid[:, 1]
    on_dq = (np.abs(x) <= tol) | (np.abs(x - 1) <= tol) | (np.abs(t) <= tol) | (np.abs(t - mesh.T) <= tol)
    for e in np.nonzero((counts == 1) & ~on_dq)[0]:
        explained = False
        for h in hanging_edges:
            d = B[h] - A[h]
            for P in (A[e], B[e]):
                w = P - A[h]
                if abs(d[0] * w[1] - d[1] * w[0]) <= 1e-12 * np.dot(d, d):
                    explained = True
        if not explained:
            out.append(Violation("unmatched interior edge", tuple(int(i) for i in edges[e]),
                                 "edge belongs to a single element"))
    return out


def element_geometry(mesh, k):
    """Area, vertex coordinates and constant barycentric gradients of element ``k``.

    Gradients are returned as a (3, 2) array of ``(d/dx, d/dt)`` pairs.
    """
    P = mesh.vertices[mesh.elements[k]]
    area, grads = triangle_geometry(P)
    return area, P.copy(), grads


def triangle_geometry(P):
    P = np.asarray(P, dtype=float)
    d1 = P[1] - P[0]
    d2 = P[2] - P[0]
    det = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(det) <= 1e-300 or abs(det) <= 1e-14 * max(np.dot(d1, d1), np.dot(d2, d2)):
        raise ValueError("degenerate element (zero area)")
    g1 = np.array([d2[1], -d2[0]]) / det
    g2 = np.array([-d1[1], d1[0]]) / det
    grads = np.array([-g1 - g2, g1, g2])
    return 0.5 * abs(det), grads


def element_gradients(mesh):
    """Vectorized areas (n_elems,) and barycentric gradients (n_elems, 3, 2)."""
    if "grads" not in mesh._cache:
        P = mesh.vertices[mesh.elements]
        d1 = P[:, 1] - P[:, 0]
        d2 = P[:, 2] - P[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(det <= 0):
            raise ValueError("mesh contains degenerate or negatively oriented elements")
        g1 = np.stack([d2[:, 1], -d2[:, 0]], axis=1) / det[:, None]
        g2 = np.stack([-d1[:, 1], d1[:, 0]], axis=1) / det[:, None]
        grads = np.stack([-g1 - g2, g1, g2], axis=1)
        mesh._cache["grads"] = (_readonly(0.5 * det), _readonly(grads))
    return mesh._cache["grads"]


def centroids(mesh):
    return mesh.vertices[mesh.elements].mean(axis=1)


def to_svg(mesh, path=None, width=400):
    """SVG drawing of the mesh edges; x horizontal, t vertical (upwards)."""
    edges, _, _ = mesh.edge_data()
    T = mesh.T
    scale = width
    height = width * T
    pts = mesh.vertices
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 1 {T:g}" '
        f'width="{scale:g}" height="{height:g}">',
        f'<g fill="none" stroke="black" stroke-width="0.5" vector-effect="non-scaling-stroke" '
        f'transform="translate(0,{T:g}) scale(1,-1)">',
    ]
    for a, b in edges:
        (x0, t0), (x1, t1) = pts[a], pts[b]
        lines.append(f'<polyline points="{x0:.12g},{t0:.12g} {x1:.12g},{t1:.12g}"/>')
    lines += ["</g>", "</svg>", ""]
    text = "\n".join(lines)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def dump_text(mesh):
    """Plain-text dump: header, vertex list, element list."""
    out = [f"T {mesh.T!r}", f"vertices {mesh.n_nodes}"]
    out += [f"{x!r} {t!r}" for x, t in mesh.vertices.tolist()]
    out.append(f"elements {mesh.n_elems}")
    out += [f"{a} {b} {c}" for a, b, c in mesh.elements.tolist()]
    return "\n".join(out) + "\n"


def load_text(text):
    lines = text.strip().splitlines()
    T = float(lines[0].split()[1])
    nv = int(lines[1].split()[1])
    verts = np.array([[float(s) for s in ln.split()] for ln in lines[2:2 + nv]]).reshape(-1, 2)
    ne = int(lines[2 + nv].split()[1])
    els = np.array([[int(s) for s in ln.split()] for ln in lines[3 + nv:3 + nv + ne]],
                   dtype=np.int64).reshape(-1, 3)
    return Mesh(verts, els, T)
