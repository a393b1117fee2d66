"""The four benchmark problems on Omega = (0,1), lambda = 1, T = 1."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .assembly import ProblemSpec
from .mesh import build_tensor_mesh

PI = np.pi
NAMES = ("exp1", "exp2", "exp3", "exp4")


@dataclass(frozen=True)
class ExperimentDef:
    name: str
    problem: ProblemSpec
    nx: int = 4
    nt: int = 4

    @property
    def mesh(self):
        """Initial tensor mesh of ``nx`` by ``nt`` cells, each split into two triangles."""
        return build_tensor_mesh(self.nx, self.nt, self.problem.T)

    def parameters(self):
        p = self.problem
        return {"name": self.name, "alpha": p.alpha, "beta": p.beta, "lam": p.lam, "T": p.T,
                "nx": self.nx, "nt": self.nt}


def _zero_x(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _zero_xt(x, t):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape)


def exp1_problem(T=1.0, alpha=0.5, beta=0.5, lam=1.0):
    """Smooth manufactured solution; data follow from the adjoint relations with p = -lam f.

    With S = sin(pi x):
      u = S cos(pi t),  f = -pi S sin(pi t) + pi^2 S cos(pi t),
      dt f + dxx f = -(pi^2 + pi^4) S cos(pi t),
      u_d = u - lam (dt f + dxx f) / alpha,  u_Td = u(T) + lam f(T) / beta.
    """

    def u(x, t):
        return np.sin(PI * x) * np.cos(PI * t)

    def f(x, t):
        return -PI * np.sin(PI * x) * np.sin(PI * t) + PI**2 * np.sin(PI * x) * np.cos(PI * t)

    def ud(x, t):
        return u(x, t) + lam * (PI**2 + PI**4) * np.sin(PI * x) * np.cos(PI * t) / alpha

    def uTd(x):
        return u(x, T) + lam * f(x, T) / beta

    def u0(x):
        return u(x, 0.0)

    return ProblemSpec(alpha, beta, lam, T, u0, ud, uTd, exact_u=u, exact_f=f, name="exp1")


def exp2_ud(x, t):
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    return ((t >= 0.5) & (x >= 0.2) & (x <= 0.8)).astype(float)


def exp4_uTd(x):
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0.4) & (x <= 0.6), 0.1 - np.abs(x - 0.5), 0.0)


def make_experiment(name, T=1.0, nx=4, nt=4):
    if name == "exp1":
        prob = exp1_problem(T)
    elif name == "exp2":
        prob = ProblemSpec(1.0, 0.0, 1.0, T, _zero_x, exp2_ud, _zero_x, name="exp2")
    elif name == "exp3":
        prob = ProblemSpec(0.0, 1.0, 1.0, T, _zero_x, _zero_xt, lambda x: np.sin(PI * x), name="exp3")
    elif name == "exp4":
        prob = ProblemSpec(0.0, 1.0, 1.0, T, _zero_x, _zero_xt, exp4_uTd, name="exp4")
    else:
        raise ValueError(f"unknown experiment {name!r}; choose from {', '.join(NAMES)}")
    return ExperimentDef(name, prob, nx, nt)


def from_parameters(params):
    """Rebuild an experiment from the dictionary produced by ``ExperimentDef.parameters``."""
    name = params["name"]
    T = float(params.get("T", 1.0))
    ex = make_experiment(name, T, int(params.get("nx", 4)), int(params.get("nt", 4)))
    p = ex.problem
    alpha = float(params.get("alpha", p.alpha))
    beta = float(params.get("beta", p.beta))
    lam = float(params.get("lam", p.lam))
    if (alpha, beta, lam) == (p.alpha, p.beta, p.lam):
        return ex
    if name == "exp1":
        # the manufactured data depend on the parameters
        prob = exp1_problem(T, alpha, beta, lam)
    else:
        prob = replace(p, alpha=alpha, beta=beta, lam=lam)
    return replace(ex, problem=prob)


def zero_problem(T=1.0):
    """All data zero; the discrete solution is identically zero."""
    return ProblemSpec(0.5, 0.5, 1.0, T, _zero_x, _zero_xt, _zero_x, name="zero")
