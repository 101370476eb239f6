"""Lowering factoring trees into a fixed-buffer evaluation plan.

Routines:

- ``advance``: for each past factor k, evaluate its tree into
  ``psi{k}@next`` and normalize it; then one ``swap_past`` per factor.
- ``query:<target>``: evaluate the target's tree over the one-slice net
  (pending slice included) into ``out:<target>`` and normalize it.

Static subtrees are evaluated here and stored as constant buffers. Every
intermediate result gets its own scratch buffer, so buffer sizes and
multiplication counts are known exactly before anything runs.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from ..core.factor import Var, multiply_all, normalize, ones
from ..core.model import Classification, TbnModel, metrics, require_valid
from ..errors import PlanCapacityError, PlanningError
from ..planner.expressions import (
    ExprKind,
    card_map,
    expression_factor,
    init_expressions,
    interface_vars,
    node_var,
    past_expressions,
    scope_of,
    slice_expressions,
    static_expressions,
    unit_expression,
)
from ..planner.factoring_tree import (
    TreeNode,
    build_factoring_tree,
    evaluate_tree,
    render_tree,
    split_static_branches,
    table_size,
)
from ..planner.factorization import Factorization, StabilizationResult, advance_groups, stabilize
from ..planner.relevance import relevant_expressions
from .plan import (
    BufferRole,
    BufferSpec,
    EvaluationPlan,
    Instruction,
    OpCode,
    PlanStats,
    RoutineStats,
    evidence_id,
    output_id,
    past_id,
)

logger = logging.getLogger(__name__)

DEFAULT_BUFFER_CAP = 2 ** 26


@dataclass(frozen=True)
class RoutineTrees:
    """One factoring tree per past factor and per query target."""

    advance: Tuple[TreeNode, ...]
    queries: Dict[str, TreeNode]


def advance_trees(
    model: TbnModel, stable: Factorization, cls: Classification
) -> Tuple[TreeNode, ...]:
    """Trees computing each factor of ψ(I_t) from ψ(I_{t-1}) and slice t."""
    cards = card_map(model)
    assigned: List[list] = [[] for _ in stable.factors]
    for group in advance_groups(model, stable, cls):
        if not group.scope:
            continue  # normalization scalar
        k = stable.index_of(group.scope)
        if k is None:
            raise PlanningError(
                f"Advance piece over {sorted(group.scope)} fits no factor of {stable}"
            )
        assigned[k].extend(group.exprs)
    trees = []
    for k, factor in enumerate(stable.factors):
        preserve = interface_vars(factor, cls)
        exprs = list(assigned[k])
        missing = set(preserve) - scope_of(exprs)
        if missing:
            exprs.append(unit_expression(missing))
        trees.append(build_factoring_tree(exprs, preserve, cards))
    return tuple(trees)


def query_tree(model: TbnModel, stable: Factorization, cls: Classification, target: str) -> TreeNode:
    """Tree for P(target | λ_{0:t}) over Φ(S), ψ(I_{t-1}), Φ(D_t) and Λ(O_t)."""
    var = node_var(target, cls)
    exprs = (
        static_expressions(model, cls)
        + slice_expressions(model, cls)
        + past_expressions(stable.factors, cls)
    )
    observed = [node_var(o, cls) for o in sorted(cls.observable)]
    exprs = relevant_expressions(exprs, [var], observed)
    return build_factoring_tree(exprs, [var], card_map(model))


def factoring_trees(model: TbnModel, stable: Factorization, cls: Classification) -> RoutineTrees:
    """Advance trees for each stable past factor and one tree per declared target.

    Args:
        model: A valid model.
        stable: The stabilized past factorization.
        cls: Classification of ``model``.

    Returns:
        The trees every routine of the plan is lowered from.
    """
    return RoutineTrees(
        advance=advance_trees(model, stable, cls),
        queries={t: query_tree(model, stable, cls, t) for t in model.query_targets},
    )


def _responsible(vars: Sequence[Var], cls: Classification) -> Tuple[str, ...]:
    nodes = sorted({v.node for v in vars})
    interface = [n for n in nodes if n in cls.interface]
    return tuple(interface or nodes)


def check_capacity(
    trees: RoutineTrees,
    stable: Factorization,
    cls: Classification,
    cards: Mapping[str, int],
    cap: int,
) -> None:
    """Reject any table the plan would hold that exceeds ``cap`` entries.

    Raises:
        PlanCapacityError: Naming the interface nodes that make it large.
    """
    for factor in stable.factors:
        vars = interface_vars(factor, cls)
        size = table_size(vars, cards)
        if size > cap:
            nodes = _responsible(vars, cls)
            raise PlanCapacityError(
                f"Past factor over {', '.join(nodes)} needs {size} entries (cap {cap})", nodes
            )
    for tree in list(trees.advance) + list(trees.queries.values()):
        for node in tree.walk():
            size = table_size(node.product, cards)
            if size > cap:
                nodes = _responsible(node.product, cls)
                raise PlanCapacityError(
                    f"Intermediate table over {', '.join(nodes)} needs {size} entries (cap {cap})",
                    nodes,
                )


class _Lowering:
    """Accumulates buffers, constants and instructions for one plan."""

    def __init__(self, model: TbnModel, cls: Classification):
        self.model = model
        self.cls = cls
        self.cards = card_map(model)
        self.buffers: List[BufferSpec] = []
        self.constants: Dict[str, List[float]] = {}
        self.precomputed = 0
        self._ids = set()

    def declare(self, buffer_id: str, vars: Sequence[Var], role: BufferRole) -> str:
        if buffer_id in self._ids:
            raise PlanningError(f"Buffer {buffer_id!r} declared twice")
        self._ids.add(buffer_id)
        cards = [self.cards[v.node] for v in vars]
        self.buffers.append(
            BufferSpec(
                id=buffer_id,
                vars=[v.token for v in vars],
                cards=cards,
                size=table_size(vars, self.cards),
                role=role,
            )
        )
        return buffer_id

    def lower(self, key: str, tree: TreeNode, dst: str) -> List[Instruction]:
        """Instructions evaluating ``tree`` into the declared buffer ``dst``."""
        subtrees, residual = split_static_branches(tree)
        const_ids = []
        for i, subtree in enumerate(subtrees):
            value = evaluate_tree(subtree, lambda e: expression_factor(self.model, e))
            buffer_id = self.declare(f"{key}/c{i}", subtree.scope, BufferRole.CONSTANT)
            self.constants[buffer_id] = [float(x) for x in value.flat()]
            self.precomputed += sum(
                table_size(n.product, self.cards) for n in subtree.walk() if not n.is_leaf
            )
            const_ids.append(buffer_id)

        code: List[Instruction] = []
        counter = [0]

        def scratch(vars: Sequence[Var]) -> str:
            counter[0] += 1
            return self.declare(f"{key}/t{counter[0]}", vars, BufferRole.SCRATCH)

        def leaf_buffer(node: TreeNode) -> str:
            expr = node.expr
            if expr.kind is ExprKind.EVIDENCE:
                return evidence_id(expr.key)
            if expr.kind is ExprKind.PAST_FACTOR:
                return past_id(int(expr.key), "cur")
            if expr.kind is ExprKind.CONSTANT:
                return const_ids[int(expr.key)]
            raise PlanningError(f"{expr.label()} left in a residual tree")

        def emit(node: TreeNode, out: Optional[str]) -> str:
            if node.is_leaf:
                source = leaf_buffer(node)
                if not node.eliminate and out is None:
                    return source
            else:
                a = emit(node.left, None)
                b = emit(node.right, None)
                if not node.eliminate:
                    target = out or scratch(node.product)
                    code.append(Instruction(op=OpCode.MULTIPLY_INTO, dst=target, a=a, b=b))
                    return target
                source = scratch(node.product)
                code.append(Instruction(op=OpCode.MULTIPLY_INTO, dst=source, a=a, b=b))
            target = out or scratch(node.scope)
            code.append(
                Instruction(
                    op=OpCode.SUM_OUT_INTO,
                    dst=target,
                    src=source,
                    vars=[v.token for v in node.eliminate],
                )
            )
            return target

        emit(residual, dst)
        code.append(Instruction(op=OpCode.NORMALIZE_IN_PLACE, dst=dst))
        return code


def _initial_past(model: TbnModel, stable: Factorization, cls: Classification) -> Dict[str, List[float]]:
    """ψ(I_{-1}) = Φ(T_{-1}), split along the stable factors."""
    cards = card_map(model)
    init = init_expressions(model, cls)
    values = {}
    for k, factor in enumerate(stable.factors):
        vars = interface_vars(factor, cls)
        tables = [expression_factor(model, e) for e in init if e.key in factor]
        product = multiply_all(tables + [ones(vars, [cards[v.node] for v in vars])])
        psi = normalize(product, name=f"psi{k}").transpose(vars)
        values[f"psi{k}"] = [float(x) for x in psi.flat()]
    return values


def _routine_stats(routine: List[Instruction], sizes: Dict[str, int]) -> RoutineStats:
    multiplications = sum(sizes[i.dst] for i in routine if i.op is OpCode.MULTIPLY_INTO)
    touched = [
        sizes[n] for i in routine for n in (i.dst, i.a, i.b, i.src) if n is not None
    ]
    return RoutineStats(
        instructions=len(routine),
        multiplications=multiplications,
        largest_table=max(touched, default=0),
    )


def compile_plan(
    model: TbnModel,
    stabilization: StabilizationResult,
    trees: RoutineTrees,
    buffer_cap: int = DEFAULT_BUFFER_CAP,
    cls: Optional[Classification] = None,
) -> EvaluationPlan:
    """Lower stabilized trees into a deterministic plan.

    Raises:
        PlanCapacityError: If any buffer or intermediate exceeds ``buffer_cap``.
    """
    cls = cls or require_valid(model)
    stable = stabilization.stable
    cards = card_map(model)
    check_capacity(trees, stable, cls, cards, buffer_cap)

    lowering = _Lowering(model, cls)
    observables = [n.id for n in model.nodes if n.observable]
    for obs in observables:
        lowering.declare(evidence_id(obs), [node_var(obs, cls)], BufferRole.EVIDENCE)
    for k, factor in enumerate(stable.factors):
        vars = interface_vars(factor, cls)
        lowering.declare(past_id(k, "cur"), vars, BufferRole.PAST)
        lowering.declare(past_id(k, "next"), vars, BufferRole.PAST)

    advance: List[Instruction] = []
    for k, tree in enumerate(trees.advance):
        advance += lowering.lower(f"psi{k}", tree, past_id(k, "next"))
    advance += [Instruction(op=OpCode.SWAP_PAST, factor=k) for k in range(len(stable))]

    queries: Dict[str, List[Instruction]] = {}
    for target, tree in trees.queries.items():
        out = lowering.declare(output_id(target), [node_var(target, cls)], BufferRole.OUTPUT)
        queries[target] = lowering.lower(f"query:{target}", tree, out)

    sizes = {b.id: b.size for b in lowering.buffers}
    routines = {"advance": _routine_stats(advance, sizes)}
    routines.update({f"query:{t}": _routine_stats(r, sizes) for t, r in queries.items()})
    all_trees = list(trees.advance) + list(trees.queries.values())
    stats = PlanStats(
        routines=routines,
        largest_intermediate_table=max(
            (table_size(n.product, cards) for t in all_trees for n in t.walk() if not n.is_leaf),
            default=0,
        ),
        constant_table_entries=sum(len(v) for v in lowering.constants.values()),
        precomputed_entries=lowering.precomputed,
        total_buffer_entries=sum(sizes.values()),
        past_factor_count=len(stable),
        past_entries=sum(sizes[past_id(k, "cur")] for k in range(len(stable))),
    )
    trees_text = {f"psi{k}": render_tree(t) for k, t in enumerate(trees.advance)}
    trees_text.update({f"query:{t}": render_tree(tree) for t, tree in trees.queries.items()})

    plan = EvaluationPlan(
        cards=cards,
        observables=observables,
        targets=list(model.query_targets),
        metrics=metrics(model, cls),
        factorization=[list(s) for s in stable.scopes()],
        stabilization=[[list(s) for s in f.scopes()] for f in stabilization.history],
        iterations=stabilization.iterations,
        trees=trees_text,
        buffers=lowering.buffers,
        constants=lowering.constants,
        initial_past=_initial_past(model, stable, cls),
        advance=advance,
        queries=queries,
        stats=stats,
    )
    logger.info(
        "Compiled plan: %d past factor(s), %d buffers, %d entries",
        stats.past_factor_count,
        len(plan.buffers),
        stats.total_buffer_entries,
    )
    return plan


def compile_model(model: TbnModel, buffer_cap: int = DEFAULT_BUFFER_CAP) -> EvaluationPlan:
    """Validate, stabilize, plan and lower a model.

    Raises:
        ModelError: If the model is invalid.
        PlanCapacityError: If the interface makes some buffer too large.
    """
    cls = require_valid(model)
    stabilization = stabilize(model, cls)
    trees = factoring_trees(model, stabilization.stable, cls)
    return compile_plan(model, stabilization, trees, buffer_cap=buffer_cap, cls=cls)
