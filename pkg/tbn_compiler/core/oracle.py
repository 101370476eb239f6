"""Brute-force reference inference over the fully unrolled net.

Nothing here factors or prunes: the joint is built as one product and
summed, so the oracle cannot share bugs with the planner.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from ..errors import ModelError, OracleInfeasibleError
from .factor import Factor, evidence_factor, marginalize, multiply, normalize, scalar
from .model import TbnModel, classify

logger = logging.getLogger(__name__)

DEFAULT_CAP = 2 ** 24

Evidence = Sequence[Mapping[str, Sequence[float]]]


@dataclass(frozen=True, order=True)
class SliceVar:
    """A node of the unrolled net; ``step`` is None for static nodes."""

    node: str
    step: Optional[int] = None

    def __str__(self) -> str:
        return self.node if self.step is None else f"{self.node}_{self.step}"


@dataclass(frozen=True)
class UnrolledNode:
    var: SliceVar
    parents: Tuple[SliceVar, ...]
    cpt: Factor


@dataclass(frozen=True)
class UnrolledNet:
    """A flat Bayes net: S ∪ N_{0:t} ∪ T_{-1:t}."""

    t: int
    nodes: Dict[SliceVar, UnrolledNode]

    def graph(self) -> nx.DiGraph:
        """Parent-to-child edges of the unrolled net."""
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        for node in self.nodes.values():
            g.add_edges_from((p, node.var) for p in node.parents)
        return g

    def joint_size(self) -> int:
        """Entries of the full joint table over every unrolled variable."""
        return int(np.prod([n.cpt.card(n.var) for n in self.nodes.values()], dtype=object))


def unroll(model: TbnModel, t: int) -> UnrolledNet:
    """Copy each dynamic node per slice with the template CPT renamed."""
    if t < 0:
        raise ModelError(f"Time step must be >= 0, got {t}")
    cls = classify(model)
    nodes: Dict[SliceVar, UnrolledNode] = {}

    def add(var: SliceVar, parents: List[SliceVar], table: np.ndarray, own_card: int) -> None:
        cards = [model.card(p.node) for p in parents] + [own_card]
        nodes[var] = UnrolledNode(var, tuple(parents), Factor(parents + [var], cards, table))

    for node in model.nodes:
        if node.is_static:
            parents = [SliceVar(p.node) for p in node.parents]
            add(SliceVar(node.id), parents, model.cpt_table(node.id), node.card)

    for tr in sorted(cls.transitional):
        node = model.node(tr)
        parents = [
            SliceVar(p) if p in cls.static else SliceVar(p, -1) for p in node.init_parents
        ]
        add(SliceVar(tr, -1), parents, model.init_table(tr), node.card)

    for step in range(t + 1):
        for node in model.nodes:
            if node.is_static:
                continue
            parents = []
            for p in node.parents:
                if p.node in cls.static:
                    parents.append(SliceVar(p.node))
                else:
                    parents.append(SliceVar(p.node, step - p.lag))
            add(SliceVar(node.id, step), parents, model.cpt_table(node.id), node.card)

    net = UnrolledNet(t, nodes)
    if not nx.is_directed_acyclic_graph(net.graph()):
        raise ModelError("Unrolled net is cyclic")
    return net


def _evidence_factors(model: TbnModel, evidence: Evidence, t: int) -> List[Factor]:
    observable = {n.id for n in model.nodes if n.observable}
    factors = []
    for step, posted in enumerate(evidence):
        if step > t:
            break
        for obs, lik in posted.items():
            if obs not in observable:
                raise ModelError(f"{obs!r} is not an observable node")
            var = SliceVar(obs, step)
            factors.append(evidence_factor(var, model.card(obs), lik))
    return factors


def _joint(net: UnrolledNet, extra: List[Factor], cap: Optional[int]) -> Factor:
    size = net.joint_size()
    if cap is not None and size > cap:
        raise OracleInfeasibleError(
            f"Oracle infeasible: joint over {len(net.nodes)} variables has {size} entries "
            f"(cap {cap})"
        )
    joint = scalar()
    for node in net.nodes.values():
        joint = multiply(joint, node.cpt)
    for f in extra:
        joint = multiply(joint, f)
    return joint


def query_brute(
    model: TbnModel,
    target: str,
    evidence: Evidence,
    t: int,
    cap: Optional[int] = DEFAULT_CAP,
    step: Optional[int] = None,
) -> np.ndarray:
    """Posterior over ``target`` given λ_{0:t}, by full product then sum.

    Static targets ignore ``step``; dynamic targets default to slice ``t``.

    Raises:
        OracleInfeasibleError: If the joint exceeds ``cap`` entries.
        ImpossibleEvidenceError: If the evidence has zero probability.
    """
    node = model.node(target)
    net = unroll(model, t)
    if node.is_static:
        var = SliceVar(target)
    else:
        var = SliceVar(target, t if step is None else step)
        if var not in net.nodes:
            raise ModelError(f"{var} is not a node of the unrolled net for t={t}")
    joint = _joint(net, _evidence_factors(model, evidence, t), cap)
    posterior = normalize(marginalize(joint, [v for v in joint.vars if v != var]), name=str(var))
    return np.array(posterior.values, dtype=np.float64)


def past_expression(
    model: TbnModel, evidence: Evidence, t: int, cap: Optional[int] = DEFAULT_CAP
) -> Factor:
    """The unfactored past expression ψ(I_t) as one normalized table.

    For t = -1 this is the product of the initial CPTs.
    """
    cls = classify(model)
    keep = [SliceVar(r) for r in sorted(cls.static_parents)]
    if t < 0:
        init = unroll(model, 0)
        factors = [init.nodes[SliceVar(tr, -1)].cpt for tr in sorted(cls.transitional)]
        keep += [SliceVar(tr, -1) for tr in sorted(cls.transitional)]
        joint = scalar()
        for f in factors:
            joint = multiply(joint, f)
    else:
        net = unroll(model, t)
        dyn = UnrolledNet(t, {v: n for v, n in net.nodes.items() if v.step is not None})
        joint = _joint(dyn, _evidence_factors(model, evidence, t), cap)
        keep += [SliceVar(tr, t) for tr in sorted(cls.transitional)]
    missing = [v for v in keep if v not in joint.vars]
    for v in missing:
        joint = multiply(joint, evidence_factor(v, model.card(v.node)))
    joint = marginalize(joint, [v for v in joint.vars if v not in keep])
    return normalize(joint.transpose(keep), name="past expression")
