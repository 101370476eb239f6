"""Fixed-buffer plan executor.

All tables live in one float64 arena allocated when the instance is
built. Instructions are bound to prebuilt array views up front (one bound
program per past-buffer parity), so posting, querying and advancing only
write into existing memory. ``AllocationMeter`` checks that claim.
"""

import tracemalloc
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.factor import UNDERFLOW_THRESHOLD, Factor, Var, aligned, check_likelihood
from ..errors import ImpossibleEvidenceError, UnknownNameError
from .plan import (
    BufferRole,
    EvaluationPlan,
    OpCode,
    evidence_id,
    operand_vars,
    output_id,
    past_id,
)

_MULTIPLY, _SUM, _COPY, _NORMALIZE, _SWAP = range(5)

# tracemalloc domain numpy files its array data under
NUMPY_TRACE_DOMAIN = getattr(np.lib, "tracemalloc_domain", 389047)


class RuntimeInstance:
    """One evidence stream's state over a compiled plan.

    Not thread-safe; independent instances of one plan may run
    concurrently.
    """

    def __init__(self, plan: EvaluationPlan):
        self.plan = plan
        specs = {b.id: b for b in plan.buffers}
        total = sum(b.size for b in plan.buffers)
        self._arena = np.zeros(total, dtype=np.float64)

        views: Dict[str, np.ndarray] = {}
        offset = 0
        for spec in plan.buffers:
            views[spec.id] = self._arena[offset : offset + spec.size].reshape(tuple(spec.cards))
            offset += spec.size
        self._views = views

        for name, values in plan.constants.items():
            views[name].reshape(-1)[:] = values
        for spec in plan.buffers:
            if spec.role is BufferRole.EVIDENCE:
                views[spec.id].fill(1.0)
        self._past_count = len(plan.factorization)
        for k in range(self._past_count):
            views[past_id(k, "cur")].reshape(-1)[:] = plan.initial_past[f"psi{k}"]

        # parity p reads psi@cur from slot p and writes psi@next to slot 1 - p
        self._slots = [
            [views[past_id(k, "cur")] for k in range(self._past_count)],
            [views[past_id(k, "next")] for k in range(self._past_count)],
        ]
        self._parity = 0
        self._advance = [self._bind(plan.advance, specs, p) for p in (0, 1)]
        self._queries = {
            t: [self._bind(plan.queries[t], specs, p) for p in (0, 1)] for t in plan.queries
        }
        self._outputs = {}
        for t in plan.queries:
            out = views[output_id(t)].reshape(-1)
            readonly = out.view()
            readonly.flags.writeable = False
            self._outputs[t] = readonly
        self._evidence = {
            obs: views[evidence_id(obs)].reshape(-1) for obs in plan.observables
        }
        self._evidence_cards = {obs: plan.cards[obs] for obs in plan.observables}
        self._step = 0

    def _view(self, buffer_id: str, parity: int) -> np.ndarray:
        if buffer_id.startswith("psi") and "@" in buffer_id:
            k, _, side = buffer_id[3:].partition("@")
            slot = parity if side == "cur" else 1 - parity
            return self._slots[slot][int(k)]
        return self._views[buffer_id]

    def _bind(self, routine, specs, parity: int) -> List[Tuple]:
        program = []
        for ins in routine:
            if ins.op is OpCode.MULTIPLY_INTO:
                dst_vars = operand_vars(specs[ins.dst])
                a = aligned(self._view(ins.a, parity), operand_vars(specs[ins.a]), dst_vars)
                b = aligned(self._view(ins.b, parity), operand_vars(specs[ins.b]), dst_vars)
                program.append((_MULTIPLY, a, b, self._view(ins.dst, parity)))
            elif ins.op is OpCode.SUM_OUT_INTO:
                src_vars = operand_vars(specs[ins.src])
                dst_vars = operand_vars(specs[ins.dst])
                summed = {Var.parse(v) for v in ins.vars}
                kept = [v for v in src_vars if v not in summed]
                dst = self._view(ins.dst, parity).transpose([dst_vars.index(v) for v in kept])
                src = self._view(ins.src, parity)
                if summed:
                    axes = tuple(i for i, v in enumerate(src_vars) if v in summed)
                    program.append((_SUM, src, axes, dst))
                else:
                    program.append((_COPY, src, dst))
            elif ins.op is OpCode.NORMALIZE_IN_PLACE:
                program.append((_NORMALIZE, self._view(ins.dst, parity), ins.dst))
            else:
                program.append((_SWAP,))
        return program

    @staticmethod
    def _run(program: List[Tuple]) -> None:
        for step in program:
            op = step[0]
            if op == _MULTIPLY:
                np.multiply(step[1], step[2], out=step[3])
            elif op == _SUM:
                np.sum(step[1], axis=step[2], out=step[3])
            elif op == _COPY:
                np.copyto(step[2], step[1])
            elif op == _NORMALIZE:
                table = step[1]
                total = table.sum()
                if not total > UNDERFLOW_THRESHOLD:
                    raise ImpossibleEvidenceError(
                        f"Impossible or vanishing evidence: total mass of {step[2]} is {total:g}",
                        table=step[2],
                    )
                np.multiply(table, 1.0 / total, out=table)

    @property
    def step(self) -> int:
        """Index of the pending (not yet committed) slice."""
        return self._step

    @property
    def arena_entries(self) -> int:
        """Size of the single table arena, fixed at construction."""
        return self._arena.size

    def post_observation(self, observable: str, likelihood: Sequence[float]) -> None:
        """Set λ for the pending slice; the last post per slice wins.

        Raises:
            UnknownNameError: If the plan declares no such observable.
            EvidenceError: If the vector is malformed.
        """
        buffer = self._evidence.get(observable)
        if buffer is None:
            raise UnknownNameError(f"Unknown observable {observable!r}")
        vector = check_likelihood(likelihood, self._evidence_cards[observable], observable)
        np.copyto(buffer, vector)

    def query(self, target: str) -> np.ndarray:
        """Posterior of ``target`` given all evidence up to the pending slice.

        Returns a read-only view that the next query of this target overwrites.

        Raises:
            UnknownNameError: If the plan has no routine for ``target``.
            ImpossibleEvidenceError: If the evidence has zero probability.
        """
        programs = self._queries.get(target)
        if programs is None:
            raise UnknownNameError(f"Unknown query target {target!r}")
        self._run(programs[self._parity])
        return self._outputs[target]

    def advance(self) -> None:
        """Commit the pending slice into ψ and move to the next one.

        On impossible evidence the past is left as it was.
        """
        self._run(self._advance[self._parity])
        if self._past_count:
            self._parity = 1 - self._parity
        for buffer in self._evidence.values():
            buffer.fill(1.0)
        self._step += 1

    def past_factors(self) -> List[Factor]:
        """Copies of the current ψ factors over current-slice axes."""
        factors = []
        for k in range(self._past_count):
            spec = self.plan.buffer(past_id(k, "cur"))
            vars = tuple(Var.parse(v) for v in spec.vars)
            factors.append(Factor(vars, spec.cards, self._slots[self._parity][k].copy()))
        return factors


class AllocationMeter:
    """Measures numpy table memory acquired inside a ``with`` block.

    numpy reports every array data buffer to :mod:`tracemalloc` under its
    own domain. The meter snapshots that domain on entry and exit and
    records the net number of buffers (``blocks``) and bytes still alive.
    Temporaries released before the block ends are not counted.

    Example:
        >>> with AllocationMeter() as meter:
        ...     instance.advance()
        >>> meter.blocks
        0
    """

    def __init__(self) -> None:
        self.blocks = 0
        self.bytes = 0
        self._started_tracing = False
        self._before: Optional[tracemalloc.Snapshot] = None

    @staticmethod
    def _snapshot() -> tracemalloc.Snapshot:
        return tracemalloc.take_snapshot().filter_traces(
            [tracemalloc.DomainFilter(inclusive=True, domain=NUMPY_TRACE_DOMAIN)]
        )

    def __enter__(self) -> "AllocationMeter":
        self._started_tracing = not tracemalloc.is_tracing()
        if self._started_tracing:
            tracemalloc.start()
        self._before = self._snapshot()
        return self

    def __exit__(self, *exc_info) -> None:
        after = self._snapshot()
        if self._started_tracing:
            tracemalloc.stop()
        diffs = after.compare_to(self._before, "filename")
        self.blocks = sum(d.count_diff for d in diffs)
        self.bytes = sum(d.size_diff for d in diffs)


def new_instance(plan: EvaluationPlan) -> RuntimeInstance:
    """A fresh instance at slice 0 with ψ = ψ(I_{-1})."""
    return RuntimeInstance(plan)
