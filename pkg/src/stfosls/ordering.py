"""Geometric nested dissection ordering for sparse factorizations on meshes."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def nested_dissection(coords, graph, leaf_size=64):
    """Fill-reducing elimination order from coordinate bisection.

    ``coords`` holds one point per unknown, ``graph`` is the sparsity
    pattern.  Sets are split at the median of their longer extent; the
    unknowns of the first half adjacent to the second half form the
    separator and are eliminated last.
    """
    graph = sp.csr_matrix(graph)
    n = graph.shape[0]
    coords = np.asarray(coords, dtype=float)
    side = np.zeros(n, dtype=np.int8)
    out = []

    def visit(idx):
        if len(idx) <= leaf_size:
            out.append(idx)
            return
        pts = coords[idx]
        ext = pts.max(axis=0) - pts.min(axis=0)
        axis = int(np.argmax(ext))
        key = pts[:, axis]
        order = np.argsort(key, kind="stable")
        half = len(idx) // 2
        left, right = idx[order[:half]], idx[order[half:]]
        side[right] = 1
        sub = graph[left]
        touches = np.zeros(len(left), dtype=bool)
        rows = np.repeat(np.arange(len(left)), np.diff(sub.indptr))
        hit = side[sub.indices] == 1
        touches[rows[hit]] = True
        side[right] = 0
        sep = left[touches]
        left = left[~touches]
        visit(left)
        visit(right)
        out.append(sep)

    visit(np.arange(n))
    return np.concatenate(out) if out else np.arange(0)
