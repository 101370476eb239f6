"""Evaluation plan schema, plan files and the plan linter.

A plan file is canonical JSON::

    {"checksum": "<sha256 of the plan body>", "format": "tbn-plan",
     "plan": {...}, "version": 1}

Keys are sorted and separators fixed, so compiling the same model twice
gives byte-identical files.
"""

import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..core.factor import Slice, Var
from ..core.parser import read_utf8
from ..errors import FactorError, PlanFormatError

PLAN_FORMAT = "tbn-plan"
PLAN_VERSION = 1


class BufferRole(str, Enum):
    CONSTANT = "constant"
    EVIDENCE = "evidence"
    PAST = "past"
    SCRATCH = "scratch"
    OUTPUT = "output"


class OpCode(str, Enum):
    MULTIPLY_INTO = "multiply_into"
    SUM_OUT_INTO = "sum_out_into"
    NORMALIZE_IN_PLACE = "normalize_in_place"
    SWAP_PAST = "swap_past"


class BufferSpec(BaseModel):
    """One slot of the arena; ``vars`` are variable tokens in storage order."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str
    vars: List[str]
    cards: List[int]
    size: int
    role: BufferRole


class Instruction(BaseModel):
    """One step of a routine.

    multiply_into: dst = a * b, dst axes any order of the operand union.
    sum_out_into: dst = sum of src over ``vars``; an empty ``vars`` copies.
    normalize_in_place: dst scaled to total mass one.
    swap_past: past factor ``factor`` exchanges its current and next slots.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    op: OpCode
    dst: Optional[str] = None
    a: Optional[str] = None
    b: Optional[str] = None
    src: Optional[str] = None
    vars: List[str] = Field(default_factory=list)
    factor: Optional[int] = None

    def render(self) -> str:
        if self.op is OpCode.MULTIPLY_INTO:
            return f"{self.dst} = {self.a} * {self.b}"
        if self.op is OpCode.SUM_OUT_INTO:
            if not self.vars:
                return f"{self.dst} = {self.src}"
            return f"{self.dst} = sum[{', '.join(self.vars)}] {self.src}"
        if self.op is OpCode.NORMALIZE_IN_PLACE:
            return f"normalize {self.dst}"
        return f"swap psi{self.factor}"


class RoutineStats(BaseModel):
    """Instruction count, multiplications and largest table of one routine."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    instructions: int = 0
    multiplications: int = 0
    largest_table: int = 0


class PlanStats(BaseModel):
    """Exact cost figures derived from instruction and tree scopes."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    routines: Dict[str, RoutineStats] = Field(default_factory=dict)
    largest_intermediate_table: int = 0
    constant_table_entries: int = 0
    precomputed_entries: int = 0
    total_buffer_entries: int = 0
    past_factor_count: int = 0
    past_entries: int = 0

    @property
    def multiplication_count(self) -> Dict[str, int]:
        return {name: r.multiplications for name, r in self.routines.items()}


class EvaluationPlan(BaseModel):
    """A compiled model: buffers, constants, routines and their statistics.

    ``queries`` maps each declared target to its routine. The past factor
    ``k`` lives in buffers ``psi{k}@cur`` / ``psi{k}@next``; both store
    current-slice axes, and reading ``psi{k}@cur`` as an operand relabels
    them to the previous slice.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    cards: Dict[str, int]
    observables: List[str]
    targets: List[str]
    metrics: Dict[str, int]
    factorization: List[List[str]]
    stabilization: List[List[List[str]]]
    iterations: int
    trees: Dict[str, List[str]]
    buffers: List[BufferSpec]
    constants: Dict[str, List[float]]
    initial_past: Dict[str, List[float]]
    advance: List[Instruction]
    queries: Dict[str, List[Instruction]]
    stats: PlanStats

    def buffer(self, buffer_id: str) -> BufferSpec:
        """Look up a buffer by id.

        Raises:
            PlanFormatError: If no buffer has that id.
        """
        for spec in self.buffers:
            if spec.id == buffer_id:
                return spec
        raise PlanFormatError(f"Undeclared buffer {buffer_id!r}")

    def routines(self) -> List[Tuple[str, List[Instruction]]]:
        """The advance routine followed by each query routine in target order."""
        return [("advance", self.advance)] + [
            (f"query:{t}", self.queries[t]) for t in self.targets if t in self.queries
        ]


def past_id(k: int, side: str) -> str:
    """Buffer id of past factor ``k``; ``side`` is ``cur`` or ``next``."""
    return f"psi{k}@{side}"


def evidence_id(observable: str) -> str:
    """Buffer id of the likelihood vector for ``observable``."""
    return f"lambda:{observable}"


def output_id(target: str) -> str:
    """Buffer id of the normalized posterior for ``target``."""
    return f"out:{target}"


def operand_vars(spec: BufferSpec) -> Tuple[Var, ...]:
    """Axes a buffer presents when read by an instruction."""
    vars = tuple(Var.parse(v) for v in spec.vars)
    if spec.role is BufferRole.PAST and spec.id.endswith("@cur"):
        return tuple(v.shifted() for v in vars)
    return vars


def _body(plan: EvaluationPlan) -> str:
    return json.dumps(plan.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def dumps_plan(plan: EvaluationPlan) -> str:
    """Serialize ``plan`` as canonical JSON with a checksum of its body.

    Args:
        plan: The compiled plan.

    Returns:
        The file text, newline terminated. Equal plans give equal text.
    """
    body = _body(plan)
    document = {
        "format": PLAN_FORMAT,
        "version": PLAN_VERSION,
        "checksum": hashlib.sha256(body.encode("utf-8")).hexdigest(),
        "plan": json.loads(body),
    }
    return json.dumps(document, sort_keys=True, separators=(",", ":")) + "\n"


def loads_plan(text: str) -> EvaluationPlan:
    """Parse, verify and lint a plan file.

    Raises:
        PlanFormatError: On malformed JSON, a wrong format or version, a
            checksum mismatch, schema errors or lint failures.
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise PlanFormatError(f"Plan file is not valid JSON: {e}") from None
    if not isinstance(document, dict) or document.get("format") != PLAN_FORMAT:
        raise PlanFormatError("Not a TBN plan file")
    if document.get("version") != PLAN_VERSION:
        raise PlanFormatError(
            f"Unsupported plan version {document.get('version')!r} (expected {PLAN_VERSION})"
        )
    body = json.dumps(document.get("plan"), sort_keys=True, separators=(",", ":"))
    if hashlib.sha256(body.encode("utf-8")).hexdigest() != document.get("checksum"):
        raise PlanFormatError("Plan checksum mismatch: the file is corrupted")
    try:
        plan = EvaluationPlan.model_validate(document["plan"])
    except ValidationError as e:
        raise PlanFormatError(f"Plan does not match the schema: {e}") from None
    problems = lint_plan(plan)
    if problems:
        raise PlanFormatError("Plan failed linting: " + "; ".join(problems[:5]))
    return plan


def save_plan(plan: EvaluationPlan, path: Union[str, Path]) -> None:
    """Write ``plan`` to ``path`` in the format of :func:`dumps_plan`."""
    Path(path).write_text(dumps_plan(plan), encoding="utf-8")


def _decode_error(message: str, line: int, column: int) -> PlanFormatError:
    return PlanFormatError(f"Undecodable plan file (line {line}, column {column}): {message}")


def load_plan(path: Union[str, Path]) -> EvaluationPlan:
    """Read a plan file written by :func:`save_plan`.

    Raises:
        PlanFormatError: On undecodable bytes or any check of
            :func:`loads_plan`.
    """
    return loads_plan(read_utf8(path, _decode_error))


def _lint_instruction(
    ins: Instruction, specs: Dict[str, BufferSpec], where: str
) -> List[str]:
    problems = []
    names = [n for n in (ins.dst, ins.a, ins.b, ins.src) if n is not None]
    unknown = [n for n in names if n not in specs]
    if unknown:
        return [f"{where}: undeclared buffer(s) {', '.join(unknown)}"]

    def cards_of(spec: BufferSpec) -> Dict[Var, int]:
        return dict(zip(operand_vars(spec), spec.cards))

    if ins.op is OpCode.MULTIPLY_INTO:
        if None in (ins.dst, ins.a, ins.b):
            return [f"{where}: multiply_into needs dst, a and b"]
        if ins.dst in (ins.a, ins.b):
            problems.append(f"{where}: destination aliases an operand")
        dst, a, b = cards_of(specs[ins.dst]), cards_of(specs[ins.a]), cards_of(specs[ins.b])
        operands = {**a, **b}
        if set(dst) != set(operands):
            problems.append(f"{where}: destination scope differs from the operand union")
        for v in set(a) & set(b):
            if a[v] != b[v]:
                problems.append(f"{where}: cardinality mismatch on {v.token}")
        for v in set(dst) & set(operands):
            if dst[v] != operands[v]:
                problems.append(f"{where}: cardinality mismatch on {v.token}")
    elif ins.op is OpCode.SUM_OUT_INTO:
        if None in (ins.dst, ins.src):
            return [f"{where}: sum_out_into needs dst and src"]
        if ins.dst == ins.src:
            problems.append(f"{where}: destination aliases the source")
        src, dst = cards_of(specs[ins.src]), cards_of(specs[ins.dst])
        try:
            out = {Var.parse(v) for v in ins.vars}
        except FactorError as e:
            return [f"{where}: {e}"]
        if not out <= set(src):
            problems.append(f"{where}: summed variables are not in the source")
        if set(dst) != set(src) - out:
            problems.append(f"{where}: destination scope is not the source minus summed vars")
        for v in set(dst) & set(src):
            if dst[v] != src[v]:
                problems.append(f"{where}: cardinality mismatch on {v.token}")
    elif ins.op is OpCode.NORMALIZE_IN_PLACE:
        if ins.dst is None:
            problems.append(f"{where}: normalize_in_place needs dst")
    return problems


def lint_plan(plan: EvaluationPlan) -> List[str]:
    """Static checks: every operand scope agrees with its buffer spec.

    Returns a list of problems; empty means the plan is well formed.
    """
    problems: List[str] = []
    specs: Dict[str, BufferSpec] = {}
    for spec in plan.buffers:
        if spec.id in specs:
            problems.append(f"buffer {spec.id}: declared twice")
        specs[spec.id] = spec
        if len(spec.vars) != len(spec.cards):
            problems.append(f"buffer {spec.id}: vars and cards differ in length")
            continue
        try:
            vars = [Var.parse(v) for v in spec.vars]
        except FactorError as e:
            problems.append(f"buffer {spec.id}: {e}")
            continue
        if len(set(vars)) != len(vars):
            problems.append(f"buffer {spec.id}: duplicate variable")
        expected = int(np.prod(spec.cards, dtype=np.int64)) if spec.cards else 1
        if spec.size != expected:
            problems.append(f"buffer {spec.id}: size {spec.size} != {expected}")
        for v, c in zip(vars, spec.cards):
            if plan.cards.get(v.node) != c:
                problems.append(f"buffer {spec.id}: cardinality of {v.token} disagrees with the model")
        if spec.role is BufferRole.PAST and any(v.slice is Slice.PREV for v in vars):
            problems.append(f"buffer {spec.id}: past buffers store current-slice axes")
    if problems:
        return problems

    for name, values in plan.constants.items():
        if name not in specs or specs[name].role is not BufferRole.CONSTANT:
            problems.append(f"constant {name}: no constant buffer")
        elif len(values) != specs[name].size:
            problems.append(f"constant {name}: {len(values)} values for size {specs[name].size}")
    for spec in plan.buffers:
        if spec.role is BufferRole.CONSTANT and spec.id not in plan.constants:
            problems.append(f"buffer {spec.id}: constant without values")

    k_count = len(plan.factorization)
    for k in range(k_count):
        cur, nxt = past_id(k, "cur"), past_id(k, "next")
        if cur not in specs or nxt not in specs:
            problems.append(f"past factor {k}: missing buffer pair")
            continue
        if specs[cur].vars != specs[nxt].vars:
            problems.append(f"past factor {k}: buffer pair scopes differ")
        values = plan.initial_past.get(f"psi{k}")
        if values is None or len(values) != specs[cur].size:
            problems.append(f"past factor {k}: initial values missing or mis-sized")
    if problems:
        return problems

    for obs in plan.observables:
        if evidence_id(obs) not in specs:
            problems.append(f"observable {obs}: no evidence buffer")

    for name, routine in plan.routines():
        for i, ins in enumerate(routine):
            problems.extend(_lint_instruction(ins, specs, f"{name}[{i}]"))
    swaps = [ins.factor for ins in plan.advance if ins.op is OpCode.SWAP_PAST]
    tail = [ins.factor for ins in plan.advance[len(plan.advance) - len(swaps):]]
    if swaps != list(range(k_count)) or tail != swaps:
        problems.append("advance: must end with one swap_past per past factor, in order")
    for target in plan.targets:
        routine = plan.queries.get(target)
        if not routine:
            problems.append(f"query {target}: missing routine")
            continue
        last = routine[-1]
        if last.op is not OpCode.NORMALIZE_IN_PLACE or last.dst != output_id(target):
            problems.append(f"query {target}: must end normalizing {output_id(target)}")
    return problems
