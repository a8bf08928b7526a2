from .models import FlowModel, MapModel, Parametrization
from .induction import approximate_flow, approximate_map
from .validate import (
    choice_independence,
    iterate_bound_check,
    nearest_branch,
    residual_point,
    residual_report,
    roots_of_unity_branches,
    shadow_validate,
)
from .averaging import reduce_angle_dependence
from .refine import refine_fixed_point

__all__ = [
    "FlowModel",
    "MapModel",
    "Parametrization",
    "approximate_flow",
    "approximate_map",
    "choice_independence",
    "iterate_bound_check",
    "nearest_branch",
    "reduce_angle_dependence",
    "refine_fixed_point",
    "residual_point",
    "residual_report",
    "roots_of_unity_branches",
    "shadow_validate",
]
