"""Plan lowering, plan files and the fixed-buffer executor."""

from .compiler import compile_model, compile_plan, factoring_trees
from .instance import AllocationMeter, RuntimeInstance, new_instance
from .plan import EvaluationPlan, PlanStats, lint_plan, load_plan, save_plan

__all__ = [
    "AllocationMeter",
    "EvaluationPlan",
    "PlanStats",
    "RuntimeInstance",
    "compile_model",
    "compile_plan",
    "factoring_trees",
    "lint_plan",
    "load_plan",
    "new_instance",
    "save_plan",
]
