"""Dense factor algebra.

A factor is a nonnegative table over an ordered tuple of variables, stored
row-major with the last variable varying fastest. Factors are immutable;
the in-place buffer variants live in the plan runtime.
"""

from dataclasses import dataclass
from enum import IntEnum
from typing import Hashable, Iterable, Sequence, Tuple

import numpy as np

from ..errors import EvidenceError, FactorError, ImpossibleEvidenceError

UNDERFLOW_THRESHOLD = 1e-300


class Slice(IntEnum):
    """Time position of a variable inside the fixed one-slice net."""

    STATIC = 0
    PREV = 1
    CUR = 2


@dataclass(frozen=True, order=True)
class Var:
    """An axis of a factor: a node at a slice position."""

    node: str
    slice: Slice

    def __post_init__(self):
        object.__setattr__(self, "slice", Slice(self.slice))

    @property
    def token(self) -> str:
        """Plan-file spelling: ``a`` for static, ``b@prev`` / ``b@cur`` otherwise."""
        if self.slice is Slice.STATIC:
            return self.node
        return f"{self.node}@{self.slice.name.lower()}"

    @classmethod
    def parse(cls, token: str) -> "Var":
        """Inverse of :attr:`token`.

        Raises:
            FactorError: If the slice suffix is unknown.
        """
        if "@" not in token:
            return cls(token, Slice.STATIC)
        node, _, pos = token.rpartition("@")
        try:
            return cls(node, Slice[pos.upper()])
        except KeyError:
            raise FactorError(f"Bad variable token: {token!r}") from None

    def shifted(self) -> "Var":
        """The same node one slice earlier (CUR -> PREV)."""
        if self.slice is Slice.CUR:
            return Var(self.node, Slice.PREV)
        return self

    def __str__(self) -> str:
        if self.slice is Slice.STATIC:
            return self.node
        return f"{self.node}[t-1]" if self.slice is Slice.PREV else f"{self.node}[t]"


class Factor:
    """Dense nonnegative table over an ordered variable list.

    Variables may be any hashable (the oracle uses its own time-indexed
    variables); ``cards`` gives the cardinality of each in order.
    """

    __slots__ = ("vars", "cards", "values")

    def __init__(self, vars: Sequence[Hashable], cards: Sequence[int], values):
        vars = tuple(vars)
        cards = tuple(int(c) for c in cards)
        if len(vars) != len(cards):
            raise FactorError("Number of cardinalities must equal number of variables")
        if len(set(vars)) != len(vars):
            raise FactorError(f"Duplicate variable in factor scope: {vars}")
        table = np.array(values, dtype=np.float64, order="C")
        size = int(np.prod(cards, dtype=np.int64)) if cards else 1
        if table.size != size:
            raise FactorError(
                f"Values array must be of size {size} for cardinalities {cards}, got {table.size}"
            )
        if not np.all(np.isfinite(table)) or np.any(table < 0):
            raise FactorError("Factor values must be finite and nonnegative")
        table = table.reshape(cards)
        table.setflags(write=False)
        self.vars = vars
        self.cards = cards
        self.values = table

    @property
    def size(self) -> int:
        """Number of table entries."""
        return int(self.values.size)

    def card(self, var: Hashable) -> int:
        """Cardinality of ``var``; raises ValueError if it is not in scope."""
        return self.cards[self.vars.index(var)]

    def total(self) -> float:
        """Sum of all entries."""
        return float(self.values.sum())

    def flat(self) -> np.ndarray:
        """Read-only row-major view of the entries."""
        return self.values.reshape(-1)

    def transpose(self, order: Sequence[Hashable]) -> "Factor":
        """Reorder axes to ``order`` (a permutation of ``vars``)."""
        order = tuple(order)
        if set(order) != set(self.vars) or len(order) != len(self.vars):
            raise FactorError(f"{order} is not a permutation of {self.vars}")
        perm = [self.vars.index(v) for v in order]
        return Factor(order, [self.cards[i] for i in perm], self.values.transpose(perm))

    def __repr__(self) -> str:
        scope = ", ".join(f"{v}:{c}" for v, c in zip(self.vars, self.cards))
        return f"<Factor({scope}) size={self.size}>"


def scalar(value: float = 1.0) -> Factor:
    """Factor over no variables holding a single value."""
    return Factor((), (), [value])


def ones(vars: Sequence[Hashable], cards: Sequence[int]) -> Factor:
    """All-ones factor, the identity of :func:`multiply` over ``vars``.

    Args:
        vars: Scope of the factor.
        cards: Cardinality of each variable, in scope order.

    Returns:
        A factor whose every entry is 1.
    """
    return Factor(vars, cards, np.ones(int(np.prod(cards, dtype=np.int64)) if cards else 1))


def aligned(table: np.ndarray, vars: Tuple, target: Tuple) -> np.ndarray:
    """View ``table`` (axes ``vars``) broadcastable against axes ``target``.

    ``vars`` must be a subset of ``target``. Missing axes become length 1.
    """
    missing = [v for v in target if v not in vars]
    expanded = table.reshape(table.shape + (1,) * len(missing))
    axes = list(vars) + missing
    return expanded.transpose([axes.index(v) for v in target])


def multiply(f: Factor, g: Factor) -> Factor:
    """Pointwise product; result vars are f's order then g's new vars."""
    for v, c in zip(g.vars, g.cards):
        if v in f.vars and f.card(v) != c:
            raise FactorError(f"Cardinality mismatch on {v}: {f.card(v)} vs {c}")
    new = [(v, c) for v, c in zip(g.vars, g.cards) if v not in f.vars]
    vars = f.vars + tuple(v for v, _ in new)
    cards = f.cards + tuple(c for _, c in new)
    values = aligned(f.values, f.vars, vars) * aligned(g.values, g.vars, vars)
    return Factor(vars, cards, values)


def multiply_all(factors: Iterable[Factor]) -> Factor:
    """Product of ``factors`` left to right.

    Args:
        factors: Factors to combine; may be empty.

    Returns:
        The product, or the unit scalar when ``factors`` is empty.

    Raises:
        FactorError: If two factors disagree on a shared variable's
            cardinality.
    """
    result = scalar()
    for f in factors:
        result = multiply(result, f)
    return result


def marginalize(f: Factor, out: Iterable[Hashable]) -> Factor:
    """Sum out ``out``; remaining vars keep their original order."""
    out = set(out)
    unknown = out - set(f.vars)
    if unknown:
        raise FactorError(f"Cannot marginalize variables not in factor: {sorted(map(str, unknown))}")
    if not out:
        return f
    axes = tuple(i for i, v in enumerate(f.vars) if v in out)
    keep = [i for i, v in enumerate(f.vars) if v not in out]
    return Factor(
        [f.vars[i] for i in keep],
        [f.cards[i] for i in keep],
        f.values.sum(axis=axes),
    )


def normalize(f: Factor, name: str = "factor") -> Factor:
    """Scale to total mass 1.

    Raises:
        ImpossibleEvidenceError: If the total mass is at or below the
            underflow threshold.
    """
    total = f.total()
    if not total > UNDERFLOW_THRESHOLD:
        raise ImpossibleEvidenceError(
            f"Impossible or vanishing evidence: total mass of {name} is {total:g}", table=name
        )
    return Factor(f.vars, f.cards, f.values / total)


def check_likelihood(lik: Sequence[float], card: int, name: str) -> np.ndarray:
    """Validate a likelihood vector for an observable of cardinality ``card``."""
    vector = np.asarray(lik, dtype=np.float64).reshape(-1)
    if vector.size != card:
        raise EvidenceError(f"Likelihood for {name} needs {card} entries, got {vector.size}")
    if not np.all(np.isfinite(vector)) or np.any(vector < 0):
        raise EvidenceError(f"Likelihood for {name} must be finite and nonnegative")
    if not np.any(vector > 0):
        raise EvidenceError(f"Likelihood for {name} is all zeros")
    return vector


def evidence_factor(var: Hashable, card: int, lik=None) -> Factor:
    """Single-variable likelihood factor; no observation means all ones."""
    if lik is None:
        return ones((var,), (card,))
    return Factor((var,), (card,), check_likelihood(lik, card, str(var)))
