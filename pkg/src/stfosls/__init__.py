"""Space-time first-order least-squares discretization of heat-equation optimal control.

Modules: ``mesh`` (tensor meshes, newest vertex bisection), ``quadrature``,
``assembly`` (discrete spaces and the saddle / adjoint systems), ``solver``,
``estimator``, ``adaptive`` (Dörfler marking, refinement loops),
``experiments`` and ``cli``.
"""
from .adaptive import ConvergenceRecord, doerfler_mark, run_loop
from .assembly import (
    DofMap,
    ProblemSpec,
    SolutionFields,
    assemble_adjoint_ls,
    assemble_saddle,
    build_dofmap,
    compute_l2_errors,
    evaluate_field,
)
from .estimator import EstimatorReport, estimator_report, local_indicators, oscillation_terms
from .experiments import ExperimentDef, make_experiment
from .mesh import Mesh, bisect, build_tensor_mesh, check_admissible, element_geometry, refine_uniform
from .quadrature import segment_rule, triangle_rule
from .solver import SolverError, solve_optimal_control, solve_saddle, solve_symmetric

__version__ = "0.1.0"

__all__ = [
    "ConvergenceRecord", "DofMap", "EstimatorReport", "ExperimentDef", "Mesh", "ProblemSpec",
    "SolutionFields", "SolverError", "assemble_adjoint_ls", "assemble_saddle", "bisect",
    "build_dofmap", "build_tensor_mesh", "check_admissible", "compute_l2_errors", "doerfler_mark",
    "element_geometry", "estimator_report", "evaluate_field", "local_indicators", "make_experiment",
    "oscillation_terms", "refine_uniform", "run_loop", "segment_rule", "solve_optimal_control",
    "solve_saddle", "solve_symmetric", "triangle_rule",
]
