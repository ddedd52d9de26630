"""Tensor-train toolkit and discrete-ordinates criticality solver."""

from .criticality import AlphaEigenSolver, EigenOptions, EigenResult, KEigenSolver, solve_alpha, solve_keff
from .qtt import QTTMatrix, QTTVector, matrix_to_qtt, quantize_vector
from .solvers import SolverOptions, tt_linsolve, tt_matvec_fit
from .tt import TTMatrix, TTVector, tt_round, tt_svd

__version__ = "0.1.0"

__all__ = [
    "AlphaEigenSolver",
    "EigenOptions",
    "EigenResult",
    "KEigenSolver",
    "QTTMatrix",
    "QTTVector",
    "SolverOptions",
    "TTMatrix",
    "TTVector",
    "matrix_to_qtt",
    "quantize_vector",
    "solve_alpha",
    "solve_keff",
    "tt_linsolve",
    "tt_matvec_fit",
    "tt_round",
    "tt_svd",
]
