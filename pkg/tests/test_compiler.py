import json

import pytest

from tbn_compiler.core import generators
from tbn_compiler.errors import ModelError, PlanCapacityError, PlanFormatError
from tbn_compiler.runtime import compile_model, lint_plan, load_plan, save_plan
from tbn_compiler.runtime.plan import (
    BufferRole,
    Instruction,
    OpCode,
    dumps_plan,
    loads_plan,
)


def test_three_chains_plan(three_chains):
    plan = compile_model(three_chains)
    assert plan.factorization == [["b", "a"], ["c", "a"], ["d", "a"]]
    assert plan.iterations == 1
    assert plan.buffer("psi0@cur").vars == ["a", "b@cur"]
    assert plan.buffer("psi0@next").role is BufferRole.PAST
    assert plan.stats.past_factor_count == 3
    assert plan.stats.past_entries == 12
    assert sorted(plan.queries) == ["a", "b", "d"]
    assert plan.observables == ["e", "f", "g"]


def test_advance_ends_with_swaps(ring):
    plan = compile_model(ring)
    swaps = [ins.factor for ins in plan.advance if ins.op is OpCode.SWAP_PAST]
    assert swaps == [0, 1, 2]
    assert all(ins.op is OpCode.SWAP_PAST for ins in plan.advance[-3:])


def test_query_routines_end_with_normalize(ring):
    plan = compile_model(ring)
    for target, routine in plan.queries.items():
        assert routine[-1].op is OpCode.NORMALIZE_IN_PLACE
        assert routine[-1].dst == f"out:{target}"


def test_initial_past_is_normalized(three_chains):
    plan = compile_model(three_chains)
    for k in range(3):
        assert sum(plan.initial_past[f"psi{k}"]) == pytest.approx(1.0)


def test_static_model_has_no_advance_work():
    plan = compile_model(generators.static_chain())
    assert plan.factorization == []
    assert plan.advance == []
    assert plan.stats.routines["advance"].multiplications == 0
    assert plan.stats.past_entries == 0


def test_converging_net_statistics():
    plan = compile_model(generators.converging_model())
    assert plan.stats.largest_intermediate_table == 32
    assert plan.stats.precomputed_entries == 4 + 4 + 16 + 32
    assert plan.stats.constant_table_entries == 2
    routine = plan.stats.routines["query:h"]
    assert routine.multiplications == 0
    assert routine.instructions == 2


def test_multiplication_counts_match_instructions(ring):
    plan = compile_model(ring)
    sizes = {b.id: b.size for b in plan.buffers}
    for name, routine in plan.routines():
        expected = sum(sizes[i.dst] for i in routine if i.op is OpCode.MULTIPLY_INTO)
        assert plan.stats.multiplication_count[name] == expected


def test_compilation_is_deterministic():
    for builder in (generators.three_chains, generators.ring_model, generators.two_slice_model):
        assert dumps_plan(compile_model(builder())) == dumps_plan(compile_model(builder()))


def test_invalid_model_rejected(two_slice):
    bad = type(two_slice)(two_slice.nodes, ("a", "zz"))
    with pytest.raises(ModelError):
        compile_model(bad)


def test_random_plans_lint_clean(rng):
    for _ in range(40):
        plan = compile_model(generators.random_model(rng))
        assert lint_plan(plan) == []


def test_save_load_round_trip(tmp_path, ring):
    plan = compile_model(ring)
    path = tmp_path / "ring.plan.json"
    save_plan(plan, path)
    assert load_plan(path) == plan
    document = json.loads(path.read_text())
    assert document["format"] == "tbn-plan"
    assert document["version"] == 1


def test_corrupted_plan_rejected(ring):
    text = dumps_plan(compile_model(ring))
    corrupted = text.replace('"iterations":3', '"iterations":2')
    assert corrupted != text
    with pytest.raises(PlanFormatError, match="checksum"):
        loads_plan(corrupted)


@pytest.mark.parametrize(
    "text, message",
    [
        ("not json", "not valid JSON"),
        ('{"format":"other"}', "Not a TBN plan"),
        ('{"format":"tbn-plan","version":7}', "version"),
    ],
)
def test_malformed_plan_files(text, message):
    with pytest.raises(PlanFormatError, match=message):
        loads_plan(text)


def test_lint_catches_undeclared_buffer(ring):
    plan = compile_model(ring)
    first = plan.advance[0]
    broken = Instruction(op=OpCode.MULTIPLY_INTO, dst="nowhere", a=first.a or first.src, b=first.b)
    bad = plan.model_copy(update={"advance": [broken] + plan.advance[1:]})
    problems = lint_plan(bad)
    assert any("nowhere" in p for p in problems)
    with pytest.raises(PlanFormatError, match="linting"):
        loads_plan(dumps_plan(bad))


def test_lint_catches_scope_mismatch(three_chains):
    plan = compile_model(three_chains)
    routine = list(plan.queries["a"])
    index = next(i for i, ins in enumerate(routine) if ins.op is OpCode.SUM_OUT_INTO and ins.vars)
    routine[index] = routine[index].model_copy(update={"vars": []})
    bad = plan.model_copy(update={"queries": {**plan.queries, "a": routine}})
    assert any("summed" in p or "destination scope" in p for p in lint_plan(bad))


def test_lint_catches_missing_swap(ring):
    plan = compile_model(ring)
    bad = plan.model_copy(update={"advance": plan.advance[:-1]})
    assert any("swap_past" in p for p in lint_plan(bad))


def test_capacity_allows_many_chains():
    plan = compile_model(generators.independent_chains(20), buffer_cap=2 ** 20)
    assert plan.stats.past_factor_count == 20
    assert plan.stats.past_entries == 80


def test_capacity_exceeded_names_interface_nodes(three_chains):
    with pytest.raises(PlanCapacityError) as info:
        compile_model(three_chains, buffer_cap=2)
    assert info.value.nodes == ("a", "b")
