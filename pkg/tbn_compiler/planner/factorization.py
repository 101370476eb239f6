"""Discovery and stabilization of the past-expression factorization.

The structure of ψ(I_t) is found without numbers: variable elimination is
run on scopes only, over the previous factorization, the slice CPTs and
the slice likelihoods, removing N_t and T_{t-1}. Whatever expressions are
never combined stay separate factors of the new past expression.
"""

import logging
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

import networkx as nx

from ..core.factor import Slice, Var
from ..core.model import Classification, TbnModel, classify
from ..errors import StabilizationError
from .expressions import ExpressionRef, interface_vars, past_expressions, slice_expressions
from .relevance import relevant_expressions

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Factorization:
    """Scopes (sets of interface node ids) whose product represents ψ.

    Equality is structural: two factorizations are equal when they have
    the same factor scopes.
    """

    factors: Tuple[FrozenSet[str], ...]
    transitional: FrozenSet[str] = field(default=frozenset(), compare=False)

    def __iter__(self):
        return iter(self.factors)

    def __len__(self) -> int:
        return len(self.factors)

    def ordered(self, factor: FrozenSet[str]) -> Tuple[str, ...]:
        """Transitional ids first, then static ids, each sorted."""
        trans = sorted(i for i in factor if i in self.transitional)
        return tuple(trans + sorted(i for i in factor if i not in self.transitional))

    def scopes(self) -> List[Tuple[str, ...]]:
        return [self.ordered(f) for f in self.factors]

    def index_of(self, ids: Iterable[str]) -> Optional[int]:
        """First factor containing every id, or None."""
        ids = frozenset(ids)
        for k, f in enumerate(self.factors):
            if ids <= f:
                return k
        return None

    def refines(self, other: "Factorization") -> bool:
        """True when each factor here lies inside some factor of ``other``."""
        return all(other.index_of(f) is not None for f in self.factors)

    def __str__(self) -> str:
        return "{" + ",".join("(" + ",".join(s) + ")" for s in self.scopes()) + "}"


@dataclass(frozen=True)
class StabilizationResult:
    """Fixpoint of the symbolic advance.

    ``history`` starts with the initial factorization and ends with
    ``stable``; ``iterations`` counts the advances that changed it.
    """

    stable: Factorization
    iterations: int
    history: Tuple[Factorization, ...]


@dataclass(frozen=True)
class AdvanceGroup:
    """Expressions combined together by one advance, and the interface ids left."""

    exprs: Tuple[ExpressionRef, ...]
    scope: FrozenSet[str]


def canonicalize(pieces: Iterable[Iterable[str]], transitional: Iterable[str]) -> Factorization:
    """Merge pieces sharing a transitional id, absorb subsets, drop empties."""
    transitional = frozenset(transitional)
    pieces = [frozenset(p) for p in pieces]
    pieces = [p for p in pieces if p]
    graph = nx.Graph()
    for i, piece in enumerate(pieces):
        graph.add_node(("piece", i))
        graph.add_edges_from((("piece", i), ("node", n)) for n in piece if n in transitional)
    merged = set()
    for component in nx.connected_components(graph):
        members = [pieces[i] for kind, i in component if kind == "piece"]
        if members:
            merged.add(frozenset().union(*members))
    kept = [p for p in merged if not any(p < q for q in merged)]
    kept.sort(key=lambda f: tuple(sorted(f)))
    return Factorization(tuple(kept), transitional)


def initial_factorization(model: TbnModel, cls: Optional[Classification] = None) -> Factorization:
    """Structure of ψ(I_{-1}) = Φ(T_{-1}) over all of I_{-1}."""
    cls = cls or classify(model)
    pieces = [
        {tr} | set(model.node(tr).init_parents) for tr in sorted(cls.transitional)
    ]
    pieces += [{r} for r in sorted(cls.static_parents)]
    return canonicalize(pieces, cls.transitional)


def elimination_vars(cls: Classification) -> FrozenSet[Var]:
    """N_t ∪ T_{t-1}: everything one advance sums out."""
    return frozenset(Var(n, Slice.CUR) for n in cls.non_transitional) | frozenset(
        Var(t, Slice.PREV) for t in cls.transitional
    )


def _eliminate(
    scopes: Sequence[FrozenSet[Var]],
    eliminate: FrozenSet[Var],
    order: Optional[Sequence[Var]] = None,
) -> List[Tuple[FrozenSet[Var], FrozenSet[int]]]:
    """Symbolic variable elimination.

    Returns the surviving (scope, member indices) pieces. Without an
    explicit order the next variable is the one whose combined scope is
    smallest, ties broken by variable order.
    """
    pieces = [(frozenset(s), frozenset([i])) for i, s in enumerate(scopes)]
    remaining = set(v for s in scopes for v in s) & set(eliminate)
    queue = [v for v in (order or ()) if v in remaining]
    while remaining:
        if queue:
            var = queue.pop(0)
        else:
            best = None
            for v in sorted(remaining):
                union = frozenset().union(*(s for s, _ in pieces if v in s))
                cost = len(union)
                if best is None or cost < best[0]:
                    best = (cost, v)
            var = best[1]
        remaining.discard(var)
        touching = [p for p in pieces if var in p[0]]
        pieces = [p for p in pieces if var not in p[0]]
        scope = frozenset().union(*(s for s, _ in touching)) - {var}
        members = frozenset().union(*(m for _, m in touching))
        pieces.append((scope, members))
    return pieces


def _advance_exprs(model: TbnModel, cls: Classification, prev: Factorization) -> List[ExpressionRef]:
    exprs = past_expressions(prev.factors, cls) + slice_expressions(model, cls)
    if not cls.interface:
        return []
    return relevant_expressions(exprs, interface_vars(cls.interface, cls))


def advance_groups(
    model: TbnModel,
    prev: Factorization,
    cls: Optional[Classification] = None,
    elimination_order: Optional[Sequence[Var]] = None,
) -> List[AdvanceGroup]:
    """Partition the advance's relevant expressions by what elimination joins."""
    cls = cls or classify(model)
    exprs = _advance_exprs(model, cls, prev)
    pieces = _eliminate([frozenset(e.scope) for e in exprs], elimination_vars(cls), elimination_order)
    groups = []
    for scope, members in pieces:
        groups.append(
            AdvanceGroup(
                exprs=tuple(exprs[i] for i in sorted(members)),
                scope=frozenset(v.node for v in scope),
            )
        )
    groups.sort(key=lambda g: min(exprs.index(e) for e in g.exprs))
    return groups


def symbolic_advance(
    model: TbnModel,
    prev: Factorization,
    elimination_order: Optional[Sequence[Var]] = None,
    cls: Optional[Classification] = None,
) -> Factorization:
    """The factorization of ψ(I_t) given that of ψ(I_{t-1}).

    Interface nodes no surviving piece mentions get a singleton factor
    (ψ is constant along them).
    """
    cls = cls or classify(model)
    groups = advance_groups(model, prev, cls, elimination_order)
    pieces = [g.scope for g in groups] + [{i} for i in sorted(cls.interface)]
    return canonicalize(pieces, cls.transitional)


def stabilize(model: TbnModel, cls: Optional[Classification] = None) -> StabilizationResult:
    """Iterate F_{k+1} = F_k joined with symbolic_advance(F_k) to a fixpoint.

    ``iterations`` counts the steps that changed the structure.

    Raises:
        StabilizationError: If the structure still changes after |T| + 1 steps.
    """
    cls = cls or classify(model)
    current = initial_factorization(model, cls)
    history = [current]
    bound = len(cls.transitional)
    for _ in range(bound + 2):
        advanced = symbolic_advance(model, current, cls=cls)
        joined = canonicalize(list(current.factors) + list(advanced.factors), cls.transitional)
        if joined == current:
            iterations = len(history) - 1
            if iterations > bound:
                logger.warning(
                    "Factorization took %d iterations for %d transitional nodes", iterations, bound
                )
            logger.info("Factorization stable after %d iteration(s): %s", iterations, current)
            return StabilizationResult(current, iterations, tuple(history))
        logger.debug("Iteration %d: %s", len(history), joined)
        current = joined
        history.append(current)
    raise StabilizationError(
        f"Factorization did not stabilize within {bound + 1} iterations "
        f"(last: {current})"
    )
