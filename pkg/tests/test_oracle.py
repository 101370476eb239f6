import numpy as np
import pytest

from tbn_compiler.core import generators
from tbn_compiler.core.generators import ModelBuilder
from tbn_compiler.core.oracle import SliceVar, past_expression, query_brute, unroll
from tbn_compiler.errors import ImpossibleEvidenceError, ModelError, OracleInfeasibleError


def test_unroll_first_slice(two_slice):
    net = unroll(two_slice, 0)
    assert {str(v) for v in net.nodes} == {"a", "b", "c", "e_-1", "d_0", "e_0", "f_0"}
    assert net.nodes[SliceVar("e", 0)].parents == (SliceVar("b"), SliceVar("e", -1))


def test_unroll_copies_template_cpts(two_slice):
    net = unroll(two_slice, 6)
    d5 = net.nodes[SliceVar("d", 5)].cpt
    d6 = net.nodes[SliceVar("d", 6)].cpt
    np.testing.assert_array_equal(d5.values, d6.values)
    assert d6.vars == (SliceVar("e", 6), SliceVar("d", 6))


def test_unroll_all_static():
    net = unroll(generators.static_chain(), 4)
    assert {str(v) for v in net.nodes} == {"a", "b", "c"}


def test_unroll_negative_step(two_slice):
    with pytest.raises(ModelError):
        unroll(two_slice, -1)


def test_static_prior_without_evidence(three_chains):
    posterior = query_brute(three_chains, "a", [{}], 0)
    np.testing.assert_allclose(posterior, three_chains.node("a").cpt)


def test_dynamic_prior_without_evidence(three_chains):
    pa = np.asarray(three_chains.node("a").cpt)
    init = np.asarray(three_chains.node("b").init_cpt)
    cpt = three_chains.cpt_table("b")  # (a, prev b, b)
    expected = np.einsum("a,p,apb->b", pa, init, cpt)
    np.testing.assert_allclose(query_brute(three_chains, "b", [{}], 0), expected)


def test_bayes_rule_single_observation():
    model = (
        ModelBuilder()
        .static("s", cpt=[0.3, 0.7])
        .dynamic("d", ["s"], cpt=[0.9, 0.1, 0.2, 0.8], observable=True)
        .build()
    )
    posterior = query_brute(model, "s", [{"d": (0.0, 1.0)}], 0)
    np.testing.assert_allclose(posterior, np.array([0.03, 0.56]) / 0.59)


def test_posteriors_sum_to_one(ring, rng):
    evidence = generators.random_evidence(ring, 2, rng)
    for target in ("a", "b", "c", "d", "e"):
        posterior = query_brute(ring, target, evidence, 1)
        assert posterior.sum() == pytest.approx(1.0)
        assert np.all(posterior >= 0)


def test_uniform_likelihood_changes_nothing(two_slice):
    plain = query_brute(two_slice, "a", [{}, {}], 1)
    uniform = query_brute(two_slice, "a", [{"f": (0.5, 0.5)}, {"f": (3.0, 3.0)}], 1)
    np.testing.assert_allclose(plain, uniform)


def test_likelihood_scale_invariance(two_slice):
    a = query_brute(two_slice, "e", [{"f": (0.2, 0.6)}], 0)
    b = query_brute(two_slice, "e", [{"f": (1.0, 3.0)}], 0)
    np.testing.assert_allclose(a, b)


def test_evidence_beyond_t_is_ignored(two_slice):
    a = query_brute(two_slice, "a", [{"f": (0.2, 0.6)}], 0)
    b = query_brute(two_slice, "a", [{"f": (0.2, 0.6)}, {"f": (1.0, 0.0)}], 0)
    np.testing.assert_allclose(a, b)


def test_earlier_slice_of_dynamic_target(two_slice):
    evidence = [{"f": (0.9, 0.1)}, {}]
    smoothed = query_brute(two_slice, "e", evidence, 1, step=0)
    assert smoothed.sum() == pytest.approx(1.0)
    with pytest.raises(ModelError):
        query_brute(two_slice, "e", evidence, 1, step=4)


def test_cap_exceeded(three_chains):
    with pytest.raises(OracleInfeasibleError, match="Oracle infeasible"):
        query_brute(three_chains, "a", [{}], 3, cap=64)


def test_no_cap(three_chains):
    capped = query_brute(three_chains, "d", [{"g": (0.1, 0.9)}], 0)
    uncapped = query_brute(three_chains, "d", [{"g": (0.1, 0.9)}], 0, cap=None)
    np.testing.assert_allclose(capped, uncapped)


def test_impossible_evidence():
    model = (
        ModelBuilder()
        .static("s", cpt=[0.5, 0.5])
        .dynamic("d", ["s"], cpt=[1.0, 0.0, 1.0, 0.0], observable=True)
        .build()
    )
    with pytest.raises(ImpossibleEvidenceError):
        query_brute(model, "s", [{"d": (0.0, 1.0)}], 0)


def test_initial_past_expression(two_slice):
    psi = past_expression(two_slice, [], -1)
    assert psi.vars == (SliceVar("b"), SliceVar("e", -1))
    # uniform over b, initial CPT over e
    expected = np.outer([0.5, 0.5], two_slice.node("e").init_cpt)
    np.testing.assert_allclose(psi.values, expected)


def test_past_expression_marginals_match_queries(two_slice, rng):
    evidence = generators.random_evidence(two_slice, 3, rng)
    for t in range(3):
        psi = past_expression(two_slice, evidence, t)
        assert psi.vars == (SliceVar("b"), SliceVar("e", t))
        np.testing.assert_allclose(psi.values.sum(), 1.0)
