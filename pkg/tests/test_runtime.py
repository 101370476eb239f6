import numpy as np
import pytest

from tbn_compiler.core import generators
from tbn_compiler.core.generators import ModelBuilder
from tbn_compiler.core.oracle import past_expression, query_brute
from tbn_compiler.errors import EvidenceError, ImpossibleEvidenceError, UnknownNameError
from tbn_compiler.runtime import AllocationMeter, compile_model, new_instance


@pytest.fixture
def chains_plan(three_chains):
    return compile_model(three_chains)


def deterministic_chain():
    """x copies itself forward exactly; o reports x without noise."""
    return (
        ModelBuilder()
        .dynamic("x", ["prev(x)"], cpt=[1, 0, 0, 1], init_cpt=[0.5, 0.5])
        .dynamic("o", ["x"], cpt=[1, 0, 0, 1], observable=True)
        .query("x")
        .build()
    )


def test_fresh_instance(chains_plan):
    instance = new_instance(chains_plan)
    assert instance.step == 0
    assert instance.arena_entries == sum(b.size for b in chains_plan.buffers)


def test_prior_queries(three_chains, chains_plan):
    instance = new_instance(chains_plan)
    for target in ("a", "b", "d"):
        np.testing.assert_allclose(
            instance.query(target), query_brute(three_chains, target, [{}], 0), atol=1e-12
        )


def test_query_is_idempotent(chains_plan):
    instance = new_instance(chains_plan)
    instance.post_observation("e", (0.2, 0.9))
    first = instance.query("b").copy()
    second = instance.query("b").copy()
    np.testing.assert_array_equal(first, second)


def test_query_output_is_read_only(chains_plan):
    result = new_instance(chains_plan).query("a")
    with pytest.raises(ValueError):
        result[0] = 1.0


def test_instances_are_isolated(chains_plan):
    one = new_instance(chains_plan)
    two = new_instance(chains_plan)
    one.post_observation("e", (0.0, 1.0))
    one.advance()
    assert two.step == 0
    np.testing.assert_allclose(two.query("a").copy(), new_instance(chains_plan).query("a").copy())


def test_initial_past_matches_initial_cpts(two_slice, past_product):
    instance = new_instance(compile_model(two_slice))
    expected = past_expression(two_slice, [], -1)
    np.testing.assert_allclose(past_product(instance.past_factors(), ["b", "e"]), expected.values)


def test_last_post_wins(three_chains, chains_plan):
    instance = new_instance(chains_plan)
    instance.post_observation("e", (0.0, 1.0))
    instance.post_observation("e", (0.3, 0.6))
    expected = query_brute(three_chains, "b", [{"e": (0.3, 0.6)}], 0)
    np.testing.assert_allclose(instance.query("b"), expected, atol=1e-12)


def test_evidence_resets_after_advance(three_chains, chains_plan):
    instance = new_instance(chains_plan)
    instance.post_observation("e", (0.1, 0.9))
    instance.advance()
    expected = query_brute(three_chains, "b", [{"e": (0.1, 0.9)}, {}], 1)
    np.testing.assert_allclose(instance.query("b"), expected, atol=1e-12)


def test_unknown_names(chains_plan):
    instance = new_instance(chains_plan)
    with pytest.raises(UnknownNameError):
        instance.post_observation("a", (1.0, 0.0))
    with pytest.raises(UnknownNameError):
        instance.query("g")


@pytest.mark.parametrize("lik", [(1.0,), (1.0, 0.0, 0.0), (-0.1, 1.0), (0.0, 0.0), (np.nan, 1.0)])
def test_invalid_likelihood(chains_plan, lik):
    instance = new_instance(chains_plan)
    with pytest.raises(EvidenceError):
        instance.post_observation("e", lik)


def test_impossible_evidence_keeps_past(past_product):
    instance = new_instance(compile_model(deterministic_chain()))
    instance.post_observation("o", (1.0, 0.0))
    instance.advance()
    before = past_product(instance.past_factors(), ["x"])
    np.testing.assert_allclose(before, [1.0, 0.0])

    instance.post_observation("o", (0.0, 1.0))
    with pytest.raises(ImpossibleEvidenceError):
        instance.query("x")
    with pytest.raises(ImpossibleEvidenceError):
        instance.advance()
    assert instance.step == 1
    np.testing.assert_allclose(past_product(instance.past_factors(), ["x"]), before)

    # a consistent report lets the stream continue
    instance.post_observation("o", (1.0, 0.0))
    instance.advance()
    assert instance.step == 2
    np.testing.assert_allclose(instance.query("x"), [1.0, 0.0])


def test_identity_dynamics_keep_belief(stream):
    instance = new_instance(compile_model(deterministic_chain()))
    stream(instance, [{"o": (0.8, 0.2)}, {}, {}, {}, {}])
    np.testing.assert_allclose(instance.query("x"), [0.8, 0.2])
    assert instance.step == 4


def test_no_allocation_while_running(chains_plan, rng, stream):
    instance = new_instance(chains_plan)
    evidence = generators.random_evidence(generators.three_chains(), 50, rng)
    with AllocationMeter() as meter:
        stream(instance, evidence)
        for target in ("a", "b", "d"):
            instance.query(target)
        instance.advance()
    assert meter.blocks == 0
    assert meter.bytes <= 0
    assert instance.step == 50


def test_allocation_meter_sees_retained_tables():
    with AllocationMeter() as meter:
        kept = np.ones(4096)
    assert meter.blocks >= 1
    assert meter.bytes >= kept.nbytes


def test_allocation_meter_ignores_released_tables():
    with AllocationMeter() as meter:
        for _ in range(10):
            np.ones(4096).sum()
    assert meter.blocks <= 0


def test_mixed_cardinalities_match_oracle(stream):
    model = (
        ModelBuilder(11)
        .static("a", states=["lo", "mid", "hi"])
        .dynamic("x", ["a", "prev(x)"], transitional=True)
        .dynamic("y", ["x"], states=["r", "g", "b"], observable=True)
        .query("a", "x")
        .build()
    )
    plan = compile_model(model)
    evidence = [{"y": (0.2, 0.5, 0.9)}, {"y": (1.0, 0.1, 0.3)}, {}, {"y": (0.6, 0.6, 0.05)}]
    instance = new_instance(plan)
    stream(instance, evidence)
    for target, card in (("a", 3), ("x", 2)):
        posterior = instance.query(target)
        assert posterior.shape == (card,)
        np.testing.assert_allclose(posterior, query_brute(model, target, evidence, 3), atol=1e-12)


def test_static_model_runtime():
    model = generators.static_chain()
    instance = new_instance(compile_model(model))
    instance.advance()
    instance.advance()
    assert instance.step == 2
    assert instance.past_factors() == []
    np.testing.assert_allclose(instance.query("c"), query_brute(model, "c", [{}], 0), atol=1e-12)


def test_matches_oracle_over_a_stream(three_chains, chains_plan, rng):
    evidence = generators.random_evidence(three_chains, 3, rng)
    instance = new_instance(chains_plan)
    for t, posted in enumerate(evidence):
        for obs, lik in posted.items():
            instance.post_observation(obs, lik)
        for target in ("a", "b", "d"):
            expected = query_brute(three_chains, target, evidence[: t + 1], t)
            np.testing.assert_allclose(instance.query(target), expected, atol=1e-9)
        instance.advance()


def test_ring_matches_oracle(ring, rng, stream):
    evidence = generators.random_evidence(ring, 3, rng)
    instance = new_instance(compile_model(ring))
    stream(instance, evidence)
    for target in ("a", "d"):
        np.testing.assert_allclose(
            instance.query(target), query_brute(ring, target, evidence, 2), atol=1e-9
        )
