from .system import (
    NBodySystem,
    ReducedHamiltonian,
    cartesian_rhs,
    first_integrals,
    hamiltonian,
    jacobi,
    jacobi_from_polar,
    jacobi_inverse,
    jacobi_matrix,
    polar_from_jacobi,
    potential,
    reduce,
)
from .potential import V0, V0_partials, coupling_A, potential_parts, theta_hat0
from .constants import CentralConfigConstants, central_config_constants, scaling_constants
from .blowup import (
    BlowupChart,
    McGeheeSystem,
    block_diagonalize,
    blowup_field,
    check_tail_orders,
    extract_linear_block,
)
from .escape import blowup_to_cartesian, cartesian_crosscheck, integrate_escape
from .closedform import cone_constants_closed_form, crosscheck_constants, pick_ell

__all__ = [
    "NBodySystem",
    "ReducedHamiltonian",
    "BlowupChart",
    "CentralConfigConstants",
    "McGeheeSystem",
    "V0",
    "V0_partials",
    "block_diagonalize",
    "blowup_field",
    "blowup_to_cartesian",
    "cartesian_crosscheck",
    "cartesian_rhs",
    "central_config_constants",
    "check_tail_orders",
    "cone_constants_closed_form",
    "coupling_A",
    "crosscheck_constants",
    "extract_linear_block",
    "first_integrals",
    "hamiltonian",
    "integrate_escape",
    "jacobi",
    "jacobi_from_polar",
    "jacobi_inverse",
    "jacobi_matrix",
    "pick_ell",
    "polar_from_jacobi",
    "potential",
    "potential_parts",
    "reduce",
    "scaling_constants",
    "theta_hat0",
]
