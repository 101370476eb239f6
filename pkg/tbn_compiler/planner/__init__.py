"""Relevance pruning, past-expression factorization and factoring trees."""

from .expressions import ExpressionRef, ExprKind
from .factoring_tree import TreeNode, build_factoring_tree, render_tree, split_static_branches
from .factorization import Factorization, StabilizationResult, stabilize, symbolic_advance
from .relevance import relevant_expressions

__all__ = [
    "ExprKind",
    "ExpressionRef",
    "Factorization",
    "StabilizationResult",
    "TreeNode",
    "build_factoring_tree",
    "relevant_expressions",
    "render_tree",
    "split_static_branches",
    "stabilize",
    "symbolic_advance",
]
