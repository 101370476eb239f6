"""Relevance pruning of the expressions feeding one computation.

Two passes, both sound for any numeric values:

1. Barren removal: a CPT whose child is neither preserved nor observed nor
   mentioned by any other remaining expression sums to one and is dropped.
   Repeated until nothing changes.
2. Disconnection: an expression sharing no variable path with a preserved
   variable contributes only a scalar, which normalization absorbs.
"""

import logging
from typing import Iterable, List, Sequence

import networkx as nx

from ..core.factor import Var
from ..errors import PlanningError
from .expressions import ExpressionRef, ExprKind

logger = logging.getLogger(__name__)

_CPT_KINDS = (ExprKind.NODE_CPT, ExprKind.INIT_CPT)


def _remove_barren(exprs: List[ExpressionRef], keep: frozenset) -> List[ExpressionRef]:
    changed = True
    while changed:
        changed = False
        for i, expr in enumerate(exprs):
            if expr.kind not in _CPT_KINDS or expr.head in keep:
                continue
            if any(expr.head in other.scope for j, other in enumerate(exprs) if j != i):
                continue
            del exprs[i]
            changed = True
            break
    return exprs


def _connected_to(exprs: List[ExpressionRef], preserve: frozenset) -> List[ExpressionRef]:
    graph = nx.Graph()
    for i, expr in enumerate(exprs):
        graph.add_node(("expr", i))
        graph.add_edges_from((("expr", i), ("var", v)) for v in expr.scope)
    reached = set()
    for v in preserve:
        if graph.has_node(("var", v)):
            reached |= nx.node_connected_component(graph, ("var", v))
    return [e for i, e in enumerate(exprs) if ("expr", i) in reached]


def relevant_expressions(
    exprs: Sequence[ExpressionRef],
    preserve: Iterable[Var],
    observed: Iterable[Var] = (),
) -> List[ExpressionRef]:
    """The subset of ``exprs`` that can influence the preserved variables.

    Evidence and past-factor expressions are never removed as barren;
    they may still be dropped when disconnected. Input order is kept.

    Raises:
        PlanningError: If a preserved variable appears in no expression.
    """
    preserve = frozenset(preserve)
    present = frozenset(v for e in exprs for v in e.scope)
    missing = sorted(preserve - present)
    if missing:
        raise PlanningError(
            "Not in the one-slice net: " + ", ".join(v.token for v in missing)
        )
    keep = preserve | frozenset(observed)
    pruned = _remove_barren(list(exprs), keep)
    pruned = _connected_to(pruned, preserve)
    logger.debug("Relevance kept %d of %d expressions", len(pruned), len(exprs))
    return pruned
