"""
Example usage of the TBN compiler.

This script compiles the bundled three-chain model, streams a few slices of
evidence through the fixed-buffer runtime and checks every posterior
against the brute-force oracle.
"""

from pathlib import Path

import numpy as np

from tbn_compiler.core.evidence import Advance, Observe, Query, evidence_by_slice, load_stream
from tbn_compiler.core.oracle import query_brute
from tbn_compiler.core.parser import load_model
from tbn_compiler.runtime.compiler import compile_model
from tbn_compiler.runtime.instance import AllocationMeter, new_instance

HERE = Path(__file__).parent


def example_1_compile(model):
    """Compile a model and show the past-expression factorization."""
    print("\n=== Example 1: Compilation ===")
    plan = compile_model(model)
    print("Factorization:", plan.factorization)
    print("Stable after", plan.iterations, "iteration(s)")
    for name, routine in plan.stats.routines.items():
        print(f"{name}: {routine.multiplications} multiplications, largest table {routine.largest_table}")
    return plan


def example_2_stream(model, plan):
    """Run an evidence stream and compare each query with the oracle."""
    print("\n=== Example 2: Streaming Evidence ===")
    records = load_stream(HERE / "three_chains.evidence")
    slices = evidence_by_slice(records)
    instance = new_instance(plan)
    for record in records:
        if isinstance(record, Observe):
            instance.post_observation(record.observable, record.likelihood)
        elif isinstance(record, Query):
            posterior = np.array(instance.query(record.target))
            expected = query_brute(model, record.target, slices, instance.step)
            print(
                f"t={instance.step} {record.target} {posterior.round(6)} "
                f"(oracle diff {np.max(np.abs(posterior - expected)):.1e})"
            )
        elif isinstance(record, Advance):
            instance.advance()
    print("Arena entries:", instance.arena_entries)


def example_3_long_run(plan):
    """Advance many steps with random sensor reports."""
    print("\n=== Example 3: Long Run ===")
    rng = np.random.default_rng(7)
    instance = new_instance(plan)
    with AllocationMeter() as meter:
        for _ in range(1000):
            for obs in plan.observables:
                instance.post_observation(obs, rng.dirichlet([1.0, 1.0]))
            instance.advance()
    print(f"After {instance.step} steps: P(a) = {np.array(instance.query('a')).round(6)}")
    print(f"Table buffers still held from the run: {meter.blocks}")


def main():
    model = load_model(HERE / "three_chains.tbn")
    plan = example_1_compile(model)
    example_2_stream(model, plan)
    example_3_long_run(plan)


if __name__ == "__main__":
    main()
