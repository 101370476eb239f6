"""Temporal Bayes net templates: declarations, validation and classification."""

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, FrozenSet, List, Optional, Tuple

import networkx as nx
import numpy as np

from ..errors import ModelError

CPT_TOLERANCE = 1e-9


class NodeKind(str, Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class ParentRef:
    """A parent of a node; ``lag`` 1 means the previous slice."""

    node: str
    lag: int = 0

    def __str__(self) -> str:
        return f"prev({self.node})" if self.lag == 1 else self.node


@dataclass(frozen=True)
class NodeDecl:
    """One template node.

    ``cpt`` is flat row-major over (parents..., self): one conditional
    distribution per parent configuration, rightmost parent fastest.
    ``init_cpt`` has the same layout over (init_parents..., self).
    """

    id: str
    kind: NodeKind
    states: Tuple[str, ...]
    parents: Tuple[ParentRef, ...] = ()
    cpt: Tuple[float, ...] = ()
    observable: bool = False
    init_parents: Tuple[str, ...] = ()
    init_cpt: Optional[Tuple[float, ...]] = None

    @property
    def card(self) -> int:
        return len(self.states)

    @property
    def is_static(self) -> bool:
        return self.kind is NodeKind.STATIC


@dataclass(frozen=True)
class TbnModel:
    """A temporal Bayes net template plus its declared query targets."""

    nodes: Tuple[NodeDecl, ...]
    query_targets: Tuple[str, ...] = ()

    @cached_property
    def by_id(self) -> Dict[str, NodeDecl]:
        return {n.id: n for n in self.nodes}

    def node(self, node_id: str) -> NodeDecl:
        """Declaration of ``node_id``.

        Raises:
            ModelError: If no node has that id.
        """
        try:
            return self.by_id[node_id]
        except KeyError:
            raise ModelError(f"Reference to undeclared node {node_id!r}") from None

    def card(self, node_id: str) -> int:
        return self.node(node_id).card

    def cpt_table(self, node_id: str) -> np.ndarray:
        """CPT reshaped to (parent cards..., own card)."""
        node = self.node(node_id)
        shape = tuple(self.card(p.node) for p in node.parents) + (node.card,)
        return np.asarray(node.cpt, dtype=np.float64).reshape(shape)

    def init_table(self, node_id: str) -> np.ndarray:
        """Initial CPT reshaped to (init parent cards..., own card).

        Raises:
            ModelError: If the node has no initial CPT.
        """
        node = self.node(node_id)
        if node.init_cpt is None:
            raise ModelError(f"Transitional node {node_id!r} has no initial CPT")
        shape = tuple(self.card(p) for p in node.init_parents) + (node.card,)
        return np.asarray(node.init_cpt, dtype=np.float64).reshape(shape)


@dataclass(frozen=True)
class Classification:
    """Derived node sets: S, D, T, N, R, O and the interface I = R ∪ T."""

    static: FrozenSet[str]
    dynamic: FrozenSet[str]
    transitional: FrozenSet[str]
    non_transitional: FrozenSet[str]
    static_parents: FrozenSet[str]
    observable: FrozenSet[str]

    @property
    def interface(self) -> FrozenSet[str]:
        return self.static_parents | self.transitional


@dataclass(frozen=True)
class Violation:
    """One broken rule: a stable code, the node involved and a message."""

    code: str
    node: Optional[str]
    message: str

    def __str__(self) -> str:
        where = f"[{self.node}] " if self.node else ""
        return f"{self.code}: {where}{self.message}"


@dataclass
class ValidationReport:
    """Every violated invariant of a model; empty means valid."""

    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, node: Optional[str], message: str) -> None:
        self.violations.append(Violation(code, node, message))

    def codes(self) -> List[str]:
        return [v.code for v in self.violations]

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


def transitional_ids(model: TbnModel) -> FrozenSet[str]:
    """Nodes targeted by some previous-slice parent reference."""
    return frozenset(p.node for n in model.nodes for p in n.parents if p.lag == 1)


def classify(model: TbnModel) -> Classification:
    """Derive the node classification from structure alone.

    Raises:
        ModelError: If a transitional node lacks an initial CPT.
    """
    static = frozenset(n.id for n in model.nodes if n.is_static)
    dynamic = frozenset(n.id for n in model.nodes if not n.is_static)
    transitional = transitional_ids(model) & dynamic
    missing = sorted(t for t in transitional if model.node(t).init_cpt is None)
    if missing:
        raise ModelError(f"Transitional node(s) missing initial CPT: {', '.join(missing)}")
    static_parents = frozenset(
        p.node for n in model.nodes if not n.is_static for p in n.parents if p.node in static
    )
    observable = frozenset(n.id for n in model.nodes if n.observable)
    return Classification(
        static=static,
        dynamic=dynamic,
        transitional=transitional,
        non_transitional=dynamic - transitional,
        static_parents=static_parents,
        observable=observable,
    )


def _check_table(
    report: ValidationReport, node_id: str, label: str, values, shape: Tuple[int, ...]
) -> None:
    expected = int(np.prod(shape))
    if len(values) != expected:
        report.add(
            "cpt-shape",
            node_id,
            f"{label} has {len(values)} entries, expected {expected} for shape {shape}",
        )
        return
    table = np.asarray(values, dtype=np.float64).reshape(-1, shape[-1])
    if not np.all(np.isfinite(table)) or np.any(table < 0):
        report.add("cpt-values", node_id, f"{label} entries must be finite and nonnegative")
        return
    sums = table.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > CPT_TOLERANCE)
    for row in bad:
        report.add(
            "cpt-normalization",
            node_id,
            f"{label} distribution {int(row)} sums to {sums[row]:.12g}, not 1",
        )


def validate(model: TbnModel) -> ValidationReport:
    """Report every violated structural or numeric invariant.

    Never raises; a valid model yields an empty report.
    """
    report = ValidationReport()
    seen = set()
    for node in model.nodes:
        if node.id in seen:
            report.add("duplicate-node", node.id, "node declared more than once")
        seen.add(node.id)
    ids = {n.id: n for n in model.nodes}

    for node in model.nodes:
        if len(node.states) < 2:
            report.add("cardinality", node.id, "a node needs at least 2 states")
        if len(set(node.states)) != len(node.states):
            report.add("duplicate-state", node.id, "state labels must be unique")
        if node.observable and node.is_static:
            report.add("observable-static", node.id, "only dynamic nodes can be observable")
        refs = [(p.node, p.lag) for p in node.parents]
        if len(set(refs)) != len(refs):
            report.add("duplicate-parent", node.id, "a parent is listed twice")
        parents_known = True
        for p in node.parents:
            if p.node not in ids:
                report.add("undeclared-node", node.id, f"parent {p} is not declared")
                parents_known = False
                continue
            parent = ids[p.node]
            if p.lag not in (0, 1):
                report.add("lag", node.id, f"parent {p.node} has lag {p.lag}; only 0 or 1 allowed")
            elif p.lag == 1 and parent.is_static:
                report.add(
                    "lag-static", node.id, f"prev({p.node}) refers to static node {p.node}"
                )
            if node.is_static and p.lag != 0:
                report.add(
                    "static-temporal-parent",
                    node.id,
                    f"static node {node.id} cannot have a previous-slice parent prev({p.node})",
                )
            if node.is_static and not parent.is_static:
                report.add(
                    "static-parent-dynamic",
                    node.id,
                    f"dynamic node {p.node} cannot be a parent of static node {node.id} "
                    "(rule: static nodes take only static, same-slice parents)",
                )
        if parents_known and len(node.states) >= 1:
            shape = tuple(len(ids[p.node].states) for p in node.parents) + (len(node.states),)
            _check_table(report, node.id, "CPT", node.cpt, shape)

    graph = nx.DiGraph()
    graph.add_nodes_from(ids)
    for node in model.nodes:
        graph.add_edges_from((p.node, node.id) for p in node.parents if p.lag == 0 and p.node in ids)
    if not nx.is_directed_acyclic_graph(graph):
        cycle = nx.find_cycle(graph)
        report.add(
            "cycle", cycle[0][0], "within-slice arcs form a cycle: " + " -> ".join(u for u, _ in cycle)
        )

    transitional = {p.node for n in model.nodes for p in n.parents if p.lag == 1} & {
        n.id for n in model.nodes if not n.is_static
    }
    static_parents = {
        p.node for n in model.nodes if not n.is_static for p in n.parents
        if p.node in ids and ids[p.node].is_static
    }
    init_graph = nx.DiGraph()
    init_graph.add_nodes_from(transitional)
    for node in model.nodes:
        if node.init_cpt is None:
            if node.id in transitional:
                report.add("missing-initcpt", node.id, "transitional node needs an initial CPT")
            elif node.init_parents:
                report.add("orphan-initparents", node.id, "initial parents given without initial CPT")
            continue
        if node.id not in transitional:
            report.add(
                "redundant-initcpt", node.id, "initial CPT declared on a non-transitional node"
            )
            continue
        known = True
        for p in node.init_parents:
            if p not in ids:
                report.add("undeclared-node", node.id, f"initial parent {p} is not declared")
                known = False
            elif p not in static_parents and p not in transitional:
                report.add(
                    "initcpt-parent",
                    node.id,
                    f"initial parent {p} must be a static parent or a transitional node",
                )
            elif p in transitional:
                init_graph.add_edge(p, node.id)
        if len(set(node.init_parents)) != len(node.init_parents):
            report.add("duplicate-parent", node.id, "an initial parent is listed twice")
        if known:
            shape = tuple(len(ids[p].states) for p in node.init_parents) + (len(node.states),)
            _check_table(report, node.id, "initial CPT", node.init_cpt, shape)
    if not nx.is_directed_acyclic_graph(init_graph):
        cycle = nx.find_cycle(init_graph)
        report.add(
            "init-cycle", cycle[0][0], "initial CPT parents form a cycle: " + " -> ".join(u for u, _ in cycle)
        )

    for target in model.query_targets:
        if target not in ids:
            report.add("undeclared-node", target, f"query target {target} is not declared")
    if len(set(model.query_targets)) != len(model.query_targets):
        report.add("duplicate-query", None, "a query target is declared twice")
    return report


def require_valid(model: TbnModel) -> Classification:
    """Validate and classify, raising on the first report entry."""
    report = validate(model)
    if not report.ok:
        details = "; ".join(str(v) for v in report.violations[:5])
        more = f" (+{len(report) - 5} more)" if len(report) > 5 else ""
        raise ModelError(f"Model is invalid: {details}{more}")
    return classify(model)


def metrics(model: TbnModel, classification: Classification) -> Dict[str, int]:
    """Node counts in the style of a model summary table."""
    return {
        "total_nodes": len(model.nodes),
        "static_nodes": len(classification.static),
        "dynamic_nodes": len(classification.dynamic),
        "transitional_nodes": len(classification.transitional),
        "static_parents": len(classification.static_parents),
        "observables": len(classification.observable),
    }
