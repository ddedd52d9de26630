"""Discrete-ordinates transport data model and operator assembly."""

from .assembly import (
    DENSE_CAP,
    TERMS,
    OperatorSet,
    assemble_dense_operators,
    assemble_operators,
    assemble_qtt_operators,
    assemble_tt_operators,
    octant_factors,
    operator_max_difference,
)
from .matrices import angular_matrix, diff_matrix, integral_matrix, interp_matrix, octant_projector
from .oracle import apply_loop_oracle
from .problem import (
    PU239,
    CrossSections,
    SpatialGrid,
    TransportProblem,
    load_problem,
    problem_from_dict,
    problem_to_dict,
    pu239_slab,
    save_problem,
)
from .quadrature import AngularQuadrature, build_quadrature, octant_signs

__all__ = [
    "AngularQuadrature",
    "CrossSections",
    "DENSE_CAP",
    "OperatorSet",
    "PU239",
    "SpatialGrid",
    "TERMS",
    "TransportProblem",
    "angular_matrix",
    "apply_loop_oracle",
    "assemble_dense_operators",
    "assemble_operators",
    "assemble_qtt_operators",
    "assemble_tt_operators",
    "build_quadrature",
    "diff_matrix",
    "integral_matrix",
    "interp_matrix",
    "load_problem",
    "octant_factors",
    "octant_projector",
    "octant_signs",
    "operator_max_difference",
    "problem_from_dict",
    "problem_to_dict",
    "pu239_slab",
    "save_problem",
]
