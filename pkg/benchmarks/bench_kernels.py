"""Compare the numba and pure-numpy element kernels.

Run: python3 benchmarks/bench_kernels.py --levels 4 5 6 --repeats 5
"""
import argparse
import timeit

import numpy as np

from stfosls import _kernels
from stfosls.mesh import build_tensor_mesh, element_gradients, refine_uniform


def best_of(fn, repeats):
    return min(timeit.repeat(fn, number=1, repeat=repeats))


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--levels", type=int, nargs="+", default=[4, 5, 6])
    p.add_argument("--repeats", type=int, default=5)
    args = p.parse_args()

    if not _kernels.HAVE_NUMBA:
        print("numba is not importable; only the numpy path exists")
        return

    rng = np.random.default_rng(0)
    mesh = build_tensor_mesh(4, 4)
    done = 0
    print(f"{'kernel':20s} {'elements':>9s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s} {'max diff':>9s}")
    for level in sorted(args.levels):
        mesh = refine_uniform(mesh, level - done)
        done = level
        areas, grads = element_gradients(mesh)
        nN, nE = mesh.n_nodes, mesh.n_elems
        fields = [rng.standard_normal(nE), rng.standard_normal(nE)] + [rng.standard_normal(nN) for _ in range(6)]
        cases = {
            "ls_element_matrices": (
                lambda: _kernels.ls_element_matrices_numpy(areas, grads, -1.0),
                lambda: _kernels._ls_element_matrices_nb(areas, grads, -1.0),
            ),
            "volume_indicators": (
                lambda: _kernels.volume_indicators_numpy(areas, grads, mesh.elements, *fields, 0.5, 1.0),
                lambda: _kernels._volume_indicators_nb(areas, grads, mesh.elements, *fields, 0.5, 1.0),
            ),
        }
        for name, (f_np, f_nb) in cases.items():
            f_nb()  # compile / load cache outside the timing
            diff = float(np.max(np.abs(f_np() - f_nb())))
            t_np = best_of(f_np, args.repeats)
            t_nb = best_of(f_nb, args.repeats)
            print(f"{name:20s} {nE:9d} {1e3 * t_np:10.2f} {1e3 * t_nb:10.2f} {t_np / t_nb:8.2f} {diff:9.1e}")


if __name__ == "__main__":
    main()
