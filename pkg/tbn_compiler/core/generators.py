"""Reference and random model construction.

The named builders reproduce the small networks used throughout the test
suite and examples: a two-slice net with a static cluster, independent
transitional chains sharing one static parent, a ring of transitions, a
converging net and a static chain. ``random_model`` draws small valid
templates for property tests.
"""

from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .model import NodeDecl, NodeKind, ParentRef, TbnModel

ParentSpec = Union[str, Tuple[str, int]]


def random_cpt(rng: np.random.Generator, configs: int, card: int) -> Tuple[float, ...]:
    """``configs`` strictly positive distributions of length ``card``, flattened."""
    rows = rng.dirichlet(np.ones(card) * 2.0, size=configs)
    rows = rows / rows.sum(axis=1, keepdims=True)
    return tuple(float(v) for v in rows.reshape(-1))


def _refs(parents: Iterable[ParentSpec]) -> Tuple[ParentRef, ...]:
    refs = []
    for p in parents:
        if isinstance(p, tuple):
            refs.append(ParentRef(p[0], p[1]))
        elif p.startswith("prev(") and p.endswith(")"):
            refs.append(ParentRef(p[5:-1], 1))
        else:
            refs.append(ParentRef(p, 0))
    return tuple(refs)


class ModelBuilder:
    """Accumulates node declarations, filling missing CPTs at random."""

    def __init__(self, seed: int = 0, states: int = 2):
        self.rng = np.random.default_rng(seed)
        self.default_states = states
        self.nodes: List[NodeDecl] = []
        self.targets: List[str] = []

    def _card(self, node_id: str) -> int:
        for n in self.nodes:
            if n.id == node_id:
                return n.card
        # previous-slice references may name nodes declared later
        return self.default_states

    def _states(self, states: Optional[Sequence[str]]) -> Tuple[str, ...]:
        if states is None:
            return tuple(f"s{i}" for i in range(self.default_states))
        return tuple(states)

    def static(self, node_id: str, parents: Sequence[str] = (), states=None, cpt=None) -> "ModelBuilder":
        states = self._states(states)
        refs = _refs(parents)
        configs = int(np.prod([self._card(p.node) for p in refs]))
        self.nodes.append(
            NodeDecl(
                id=node_id,
                kind=NodeKind.STATIC,
                states=states,
                parents=refs,
                cpt=tuple(cpt) if cpt is not None else random_cpt(self.rng, configs, len(states)),
            )
        )
        return self

    def dynamic(
        self,
        node_id: str,
        parents: Sequence[ParentSpec] = (),
        states=None,
        cpt=None,
        observable: bool = False,
        init_parents: Sequence[str] = (),
        init_cpt=None,
        transitional: bool = False,
    ) -> "ModelBuilder":
        """Declare a dynamic node.

        ``prev(x)`` parents may name nodes declared later. Pass
        ``transitional=True`` (or an explicit ``init_cpt``) to attach an
        initial CPT; its parents must already be declared.
        """
        states = self._states(states)
        refs = _refs(parents)
        configs = int(
            np.prod([len(states) if p.node == node_id else self._card(p.node) for p in refs])
        )
        if init_cpt is None and transitional:
            init_configs = int(np.prod([self._card(p) for p in init_parents]))
            init_cpt = random_cpt(self.rng, init_configs, len(states))
        self.nodes.append(
            NodeDecl(
                id=node_id,
                kind=NodeKind.DYNAMIC,
                states=states,
                parents=refs,
                cpt=tuple(cpt) if cpt is not None else random_cpt(self.rng, configs, len(states)),
                observable=observable,
                init_parents=tuple(init_parents),
                init_cpt=tuple(init_cpt) if init_cpt is not None else None,
            )
        )
        return self

    def query(self, *targets: str) -> "ModelBuilder":
        self.targets.extend(targets)
        return self

    def build(self) -> TbnModel:
        return TbnModel(nodes=tuple(self.nodes), query_targets=tuple(self.targets))


def two_slice_model(seed: int = 1) -> TbnModel:
    """Static cluster a→b←c; e carries b forward; d and observable f hang off e."""
    return (
        ModelBuilder(seed)
        .static("a")
        .static("c")
        .static("b", ["a", "c"])
        .dynamic("e", ["b", "prev(e)"], transitional=True)
        .dynamic("d", ["e"])
        .dynamic("f", ["e"], observable=True)
        .query("a", "e")
        .build()
    )


def independent_chains(
    k: int = 3,
    names: Optional[Sequence[Tuple[str, str]]] = None,
    seed: int = 4,
    states: int = 2,
    targets: Sequence[str] = ("a",),
) -> TbnModel:
    """Static ``a`` with ``k`` transitional chains, each with an observable child.

    ``names`` gives (transitional, observable) pairs; defaults to b_i/o_i.
    """
    names = list(names) if names is not None else [(f"b{i}", f"o{i}") for i in range(k)]
    builder = ModelBuilder(seed, states=states).static("a")
    for trans, obs in names:
        builder.dynamic(trans, ["a", f"prev({trans})"], transitional=True)
    for trans, obs in names:
        builder.dynamic(obs, [trans], observable=True)
    return builder.query(*targets).build()


def three_chains(seed: int = 4) -> TbnModel:
    """Transitional b, c, d each depend on static a and themselves; e, f, g observe them."""
    return independent_chains(
        names=[("b", "e"), ("c", "f"), ("d", "g")], seed=seed, targets=("a", "b", "d")
    )


def ring_model(seed: int = 5) -> TbnModel:
    """Transitions rotate b→c→d→b; only b reads static a."""
    return (
        ModelBuilder(seed)
        .static("a")
        .dynamic("b", ["a", "prev(d)"], transitional=True)
        .dynamic("c", ["prev(b)"], transitional=True)
        .dynamic("d", ["prev(c)"], transitional=True)
        .dynamic("e", ["b"], observable=True)
        .dynamic("f", ["c"], observable=True)
        .dynamic("g", ["d"], observable=True)
        .query("a", "d")
        .build()
    )


def converging_model(seed: int = 3) -> TbnModel:
    """Binary h with static parents a, b, c, d; query on h."""
    return (
        ModelBuilder(seed)
        .static("a")
        .static("b")
        .static("c")
        .static("d")
        .static("h", ["a", "b", "c", "d"])
        .query("h")
        .build()
    )


def static_chain(seed: int = 2) -> TbnModel:
    """Static chain a -> b -> c queried on c."""
    return ModelBuilder(seed).static("a").static("b", ["a"]).static("c", ["b"]).query("c").build()


def random_model(
    rng: np.random.Generator,
    max_static: int = 4,
    max_dynamic: int = 6,
    max_transitional: int = 3,
    max_states: int = 3,
    init_parents: bool = True,
) -> TbnModel:
    """Draw a small valid template.

    Transitional nodes are limited by only allowing previous-slice
    references into a pool of the first ``max_transitional`` dynamic nodes.
    """
    seed = int(rng.integers(2 ** 31))
    builder = ModelBuilder(seed)
    n_static = int(rng.integers(1, max_static + 1))
    n_dynamic = int(rng.integers(1, max_dynamic + 1))
    cards = {}

    def states() -> List[str]:
        return [f"v{i}" for i in range(int(rng.integers(2, max_states + 1)))]

    statics = [f"s{i}" for i in range(n_static)]
    for i, sid in enumerate(statics):
        parents = [p for p in statics[:i] if rng.random() < 0.35][:2]
        st = states()
        cards[sid] = len(st)
        builder.static(sid, parents, states=st)

    dynamics = [f"x{i}" for i in range(n_dynamic)]
    pool = dynamics[: min(max_transitional, n_dynamic)]
    specs = {}
    for i, did in enumerate(dynamics):
        parents: List[ParentSpec] = []
        parents += [p for p in dynamics[:i] if rng.random() < 0.35][:2]
        parents += [s for s in statics if rng.random() < 0.3][:1]
        parents += [(p, 1) for p in pool if rng.random() < 0.4][:2]
        specs[did] = parents[:3]
        cards[did] = len(states())

    transitional = sorted({p[0] for ps in specs.values() for p in ps if isinstance(p, tuple)})
    static_parents = sorted({p for ps in specs.values() for p in ps if isinstance(p, str) and p in statics})
    observables = {d for d in dynamics if rng.random() < 0.5} or {dynamics[-1]}

    for did in dynamics:
        st = [f"v{i}" for i in range(cards[did])]
        init = ()
        if did in transitional and init_parents:
            earlier = [t for t in transitional if t < did]
            init = tuple(p for p in static_parents + earlier if rng.random() < 0.3)[:2]
        configs = int(np.prod([cards[p[0] if isinstance(p, tuple) else p] for p in specs[did]]))
        init_cpt = None
        if did in transitional:
            init_cpt = random_cpt(builder.rng, int(np.prod([cards[p] for p in init])), len(st))
        builder.nodes.append(
            NodeDecl(
                id=did,
                kind=NodeKind.DYNAMIC,
                states=tuple(st),
                parents=_refs(specs[did]),
                cpt=random_cpt(builder.rng, configs, len(st)),
                observable=did in observables,
                init_parents=init if did in transitional else (),
                init_cpt=init_cpt,
            )
        )

    targets = list(statics) + [dynamics[int(rng.integers(n_dynamic))]]
    return builder.query(*targets).build()


def random_evidence(
    model: TbnModel, slices: int, rng: np.random.Generator, rate: float = 0.6
) -> List[dict]:
    """Per-slice likelihood maps mixing hard one-hot and soft reports."""
    observables = [n for n in model.nodes if n.observable]
    evidence = []
    for _ in range(slices):
        posted = {}
        for node in observables:
            if rng.random() >= rate:
                continue
            if rng.random() < 0.3:
                lik = np.zeros(node.card)
                lik[int(rng.integers(node.card))] = 1.0
            else:
                lik = rng.uniform(0.05, 1.0, size=node.card)
            posted[node.id] = tuple(float(v) for v in lik)
        evidence.append(posted)
    return evidence
