"""Factoring trees with early marginalization.

A factoring tree fixes the order in which expressions are multiplied.
Each node records the variables summed out right after its product: a
variable is eliminated as soon as no expression outside the subtree
mentions it, unless it must be preserved.
"""

from dataclasses import dataclass, replace
from typing import Callable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..core.factor import Factor, Var, marginalize, multiply
from ..errors import PlanningError
from .expressions import ExpressionRef, ExprKind


def table_size(vars: Sequence[Var], cards: Mapping[str, int]) -> int:
    """Entries of a dense table over ``vars``; 1 for an empty scope."""
    return int(np.prod([cards[v.node] for v in vars], dtype=np.int64)) if vars else 1


@dataclass(frozen=True)
class TreeNode:
    """One node of a factoring tree.

    ``product`` is the scope of the (pre-elimination) product, ``scope``
    what remains after summing out ``eliminate``. Leaves carry ``expr``.
    """

    scope: Tuple[Var, ...]
    product: Tuple[Var, ...]
    eliminate: Tuple[Var, ...] = ()
    expr: Optional[ExpressionRef] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    first_leaf: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.expr is not None

    @property
    def is_static(self) -> bool:
        """No likelihood or past-factor leaf below this node."""
        if self.is_leaf:
            return not self.expr.is_dynamic_input
        return self.left.is_static and self.right.is_static

    def leaves(self) -> Iterator[ExpressionRef]:
        if self.is_leaf:
            yield self.expr
        else:
            yield from self.left.leaves()
            yield from self.right.leaves()

    def walk(self) -> Iterator["TreeNode"]:
        """Post-order traversal."""
        if not self.is_leaf:
            yield from self.left.walk()
            yield from self.right.walk()
        yield self


def _leaf(expr: ExpressionRef, index: int, eliminate: Tuple[Var, ...]) -> TreeNode:
    return TreeNode(
        scope=tuple(v for v in expr.scope if v not in eliminate),
        product=expr.scope,
        eliminate=eliminate,
        expr=expr,
        first_leaf=index,
    )


def _merge(a: TreeNode, b: TreeNode, rest: List[TreeNode], preserve: frozenset) -> TreeNode:
    if b.first_leaf < a.first_leaf:
        a, b = b, a
    product = a.scope + tuple(v for v in b.scope if v not in a.scope)
    mentioned = {v for n in rest for v in n.scope}
    eliminate = tuple(v for v in product if v not in preserve and v not in mentioned)
    return TreeNode(
        scope=tuple(v for v in product if v not in eliminate),
        product=product,
        eliminate=eliminate,
        left=a,
        right=b,
        first_leaf=a.first_leaf,
    )


def build_factoring_tree(
    exprs: Sequence[ExpressionRef], preserve, cards: Mapping[str, int]
) -> TreeNode:
    """Greedy pairwise combination.

    Each round merges the pair whose product table is smallest; ties go to
    fewer variables, then the smaller sorted scope, then the smaller leaf
    indices.

    Raises:
        PlanningError: If ``exprs`` is empty.
    """
    if not exprs:
        raise PlanningError("Cannot build a factoring tree over no expressions")
    preserve = frozenset(preserve)
    nodes: List[TreeNode] = []
    for i, expr in enumerate(exprs):
        others = {v for j, e in enumerate(exprs) if j != i for v in e.scope}
        private = tuple(v for v in expr.scope if v not in preserve and v not in others)
        nodes.append(_leaf(expr, i, private))

    while len(nodes) > 1:
        best = None
        for i in range(len(nodes)):
            for j in range(i + 1, len(nodes)):
                a, b = nodes[i], nodes[j]
                union = set(a.scope) | set(b.scope)
                key = (
                    table_size(tuple(union), cards),
                    len(union),
                    tuple(sorted(union)),
                    tuple(sorted((a.first_leaf, b.first_leaf))),
                )
                if best is None or key < best[0]:
                    best = (key, i, j)
        _, i, j = best
        rest = [n for k, n in enumerate(nodes) if k not in (i, j)]
        nodes = rest + [_merge(nodes[i], nodes[j], rest, preserve)]
    return nodes[0]


def split_static_branches(tree: TreeNode) -> Tuple[List[TreeNode], TreeNode]:
    """Cut out maximal subtrees without likelihood or past-factor leaves.

    Returns the cut subtrees and the residual tree, in which each cut
    subtree is replaced by a CONSTANT leaf keyed by its list index.
    """
    constants: List[TreeNode] = []

    def cut(node: TreeNode) -> TreeNode:
        if node.is_static:
            constants.append(node)
            expr = ExpressionRef(ExprKind.CONSTANT, str(len(constants) - 1), node.scope)
            return TreeNode(
                scope=node.scope, product=node.scope, expr=expr, first_leaf=node.first_leaf
            )
        if node.is_leaf:
            return node
        return replace(node, left=cut(node.left), right=cut(node.right))

    residual = cut(tree)
    return constants, residual


def evaluate_tree(tree: TreeNode, table: Callable[[ExpressionRef], Factor]) -> Factor:
    """Multiply and marginalize bottom-up; ``table`` supplies leaf values."""
    if tree.is_leaf:
        result = table(tree.expr)
    else:
        result = multiply(evaluate_tree(tree.left, table), evaluate_tree(tree.right, table))
    return marginalize(result, tree.eliminate)


def render_tree(tree: TreeNode) -> List[str]:
    """Indented listing, one line per node."""
    lines: List[str] = []

    def visit(node: TreeNode, depth: int) -> None:
        if node.is_leaf:
            text = str(node.expr)
        else:
            text = "x [" + ", ".join(v.token for v in node.product) + "]"
        if node.eliminate:
            text += "  sum " + ", ".join(v.token for v in node.eliminate)
        lines.append("  " * depth + text)
        if not node.is_leaf:
            visit(node.left, depth + 1)
            visit(node.right, depth + 1)

    visit(tree, 0)
    return lines
