"""Surrogate stiffness matrix assembly for isogeometric Poisson problems."""
from .assembly import assemble_stiffness, read_matrix_market, write_matrix_market
from .errors import ConfigError, ConvergenceError, NumericalError, SingularJacobianError
from .geometry import PatchMap, builtin_geometry, read_geometry, write_geometry
from .solve_verify import (apply_dirichlet, assemble_load, compute_errors, manufactured_case,
                           matrix_max_diff, solve)
from .splines import KnotVector, TensorSpace, interior_lattice, make_open_uniform_knots, tensor_space
from .surrogate import SurrogateConfig, assemble_surrogate

__all__ = [
    "ConfigError", "ConvergenceError", "KnotVector", "NumericalError", "PatchMap",
    "SingularJacobianError", "SurrogateConfig", "TensorSpace", "apply_dirichlet",
    "assemble_load", "assemble_stiffness", "assemble_surrogate", "builtin_geometry",
    "compute_errors", "interior_lattice", "make_open_uniform_knots", "manufactured_case",
    "matrix_max_diff", "read_geometry", "read_matrix_market", "solve", "tensor_space",
    "write_geometry", "write_matrix_market",
]
