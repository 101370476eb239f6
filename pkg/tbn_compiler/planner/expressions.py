"""Input expressions of the fixed one-slice net.

An expression is a reference to a table the planner combines: a node CPT,
an initial CPT, an observable's likelihood, a past-expression factor, a
precomputed constant, or a table of ones. Only scopes matter while
planning; ``expression_factor`` attaches numbers where the compiler needs
them.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Tuple

from ..core.factor import Factor, Slice, Var, ones
from ..core.model import Classification, TbnModel
from ..errors import PlanningError


class ExprKind(str, Enum):
    NODE_CPT = "cpt"
    INIT_CPT = "initcpt"
    EVIDENCE = "evidence"
    PAST_FACTOR = "past"
    CONSTANT = "constant"
    UNIT = "unit"


@dataclass(frozen=True)
class ExpressionRef:
    """A leaf of a factoring tree.

    ``scope`` lists the table's variables in storage order; for CPTs that
    is (parents..., self).
    """

    kind: ExprKind
    key: str
    scope: Tuple[Var, ...]

    @property
    def head(self) -> Var:
        """The child variable of a CPT expression."""
        return self.scope[-1]

    @property
    def is_dynamic_input(self) -> bool:
        return self.kind in (ExprKind.EVIDENCE, ExprKind.PAST_FACTOR)

    def label(self) -> str:
        names = {
            ExprKind.NODE_CPT: "phi",
            ExprKind.INIT_CPT: "phi0",
            ExprKind.EVIDENCE: "lambda",
            ExprKind.PAST_FACTOR: "psi",
        }
        name = names.get(self.kind, self.kind.value)
        return f"{name}({self.key})"

    def __str__(self) -> str:
        return f"{self.label()}[{', '.join(v.token for v in self.scope)}]"


def node_var(node_id: str, cls: Classification, lag: int = 0) -> Var:
    """The axis a node reference occupies in the one-slice net."""
    if node_id in cls.static:
        return Var(node_id, Slice.STATIC)
    return Var(node_id, Slice.PREV if lag == 1 else Slice.CUR)


def interface_vars(ids: Iterable[str], cls: Classification, previous: bool = False) -> Tuple[Var, ...]:
    """Sorted axes of a set of interface nodes, transitional ones at t or t-1."""
    return tuple(sorted(node_var(i, cls, 1 if previous else 0) for i in ids))


def static_expressions(model: TbnModel, cls: Classification) -> List[ExpressionRef]:
    """Φ(S): the static CPTs in declaration order."""
    return [
        ExpressionRef(
            ExprKind.NODE_CPT,
            n.id,
            tuple(node_var(p.node, cls) for p in n.parents) + (node_var(n.id, cls),),
        )
        for n in model.nodes
        if n.is_static
    ]


def slice_expressions(model: TbnModel, cls: Classification) -> List[ExpressionRef]:
    """Φ(D_t) then Λ(O_t) for the pending slice."""
    exprs = []
    for n in model.nodes:
        if n.is_static:
            continue
        scope = tuple(node_var(p.node, cls, p.lag) for p in n.parents) + (node_var(n.id, cls),)
        exprs.append(ExpressionRef(ExprKind.NODE_CPT, n.id, scope))
    for n in model.nodes:
        if n.observable:
            exprs.append(ExpressionRef(ExprKind.EVIDENCE, n.id, (node_var(n.id, cls),)))
    return exprs


def past_expressions(factors: Iterable[FrozenSet[str]], cls: Classification) -> List[ExpressionRef]:
    """ψ(I_{t-1}) as one expression per factor, transitional axes at t-1."""
    return [
        ExpressionRef(ExprKind.PAST_FACTOR, str(k), interface_vars(f, cls, previous=True))
        for k, f in enumerate(factors)
    ]


def init_expressions(model: TbnModel, cls: Classification) -> List[ExpressionRef]:
    """Φ(T_{-1}) with transitional axes in current-slice form."""
    exprs = []
    for tr in sorted(cls.transitional):
        node = model.node(tr)
        scope = tuple(node_var(p, cls) for p in node.init_parents) + (node_var(tr, cls),)
        exprs.append(ExpressionRef(ExprKind.INIT_CPT, tr, scope))
    return exprs


def unit_expression(vars: Iterable[Var]) -> ExpressionRef:
    """All-ones expression that keeps ``vars`` present in a product."""
    return ExpressionRef(ExprKind.UNIT, "1", tuple(sorted(vars)))


def scope_of(exprs: Iterable[ExpressionRef]) -> FrozenSet[Var]:
    return frozenset(v for e in exprs for v in e.scope)


def card_map(model: TbnModel) -> Dict[str, int]:
    """Cardinality of every node, by id."""
    return {n.id: n.card for n in model.nodes}


def expression_factor(model: TbnModel, expr: ExpressionRef) -> Factor:
    """Numeric table of a CPT or unit expression.

    Raises:
        PlanningError: For expressions whose values only exist at run time.
    """
    cards = [model.card(v.node) for v in expr.scope]
    if expr.kind is ExprKind.NODE_CPT:
        return Factor(expr.scope, cards, model.cpt_table(expr.key))
    if expr.kind is ExprKind.INIT_CPT:
        return Factor(expr.scope, cards, model.init_table(expr.key))
    if expr.kind is ExprKind.UNIT:
        return ones(expr.scope, cards)
    raise PlanningError(f"{expr.label()} has no compile-time value")
