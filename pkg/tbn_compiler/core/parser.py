"""Line-oriented model file format.

::

    # comment
    node <id> static|dynamic [observable] [transitional-init]
      states <s1> <s2> ...
      parents <id> prev(<id>) ...
      cpt <doubles, one distribution per line, rightmost parent fastest>
      initparents <id> ...
      initcpt <doubles>
    query <id>

Numbers after ``cpt``/``initcpt`` may continue on the following lines.
"""

import re
from pathlib import Path
from typing import Callable, Dict, List, Optional, Set, Tuple, Union

from ..errors import ModelError, ModelSyntaxError, TbnError
from .model import NodeDecl, NodeKind, ParentRef, TbnModel

_ID = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")
_PREV = re.compile(r"^prev\((.+)\)$")
_NODE_KEYWORDS = {"states", "parents", "cpt", "initparents", "initcpt"}
_HEADER_FLAGS = {"observable", "transitional-init"}


def _tokens(line: str) -> List[Tuple[str, int]]:
    """Whitespace-separated tokens with 1-based columns, comments removed."""
    line = line.split("#", 1)[0]
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", line)]


def _identifier(token: str, lineno: int, col: int) -> str:
    if not _ID.match(token):
        raise ModelSyntaxError(f"invalid identifier {token!r}", lineno, col)
    return token


def _number(token: str, lineno: int, col: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ModelSyntaxError(f"expected a number, got {token!r}", lineno, col) from None


class _NodeBuilder:
    def __init__(self, node_id: str, kind: NodeKind, flags: Set[str], line: int):
        self.id = node_id
        self.kind = kind
        self.observable = "observable" in flags
        self.declares_init = "transitional-init" in flags
        self.line = line
        self.states: Optional[List[str]] = None
        self.parents: List[ParentRef] = []
        self.cpt: Optional[List[float]] = None
        self.init_parents: List[str] = []
        self.init_cpt: Optional[List[float]] = None

    def build(self) -> NodeDecl:
        if self.states is None:
            raise ModelSyntaxError(f"node {self.id!r} has no states line", self.line)
        if self.cpt is None:
            raise ModelSyntaxError(f"node {self.id!r} has no cpt", self.line)
        if self.declares_init and self.init_cpt is None:
            raise ModelSyntaxError(
                f"node {self.id!r} is flagged transitional-init but has no initcpt", self.line
            )
        if self.init_cpt is not None and not self.declares_init:
            raise ModelSyntaxError(
                f"node {self.id!r} has an initcpt but its header lacks transitional-init", self.line
            )
        return NodeDecl(
            id=self.id,
            kind=self.kind,
            states=tuple(self.states),
            parents=tuple(self.parents),
            cpt=tuple(self.cpt),
            observable=self.observable,
            init_parents=tuple(self.init_parents),
            init_cpt=tuple(self.init_cpt) if self.init_cpt is not None else None,
        )


def parse_model(text: str) -> TbnModel:
    """Parse model-file content into a structurally complete model.

    Raises:
        ModelSyntaxError: On malformed lines (with line and column).
        ModelError: On duplicate ids or references to undeclared nodes.
    """
    builders: List[_NodeBuilder] = []
    queries: List[Tuple[str, int]] = []
    current: Optional[_NodeBuilder] = None
    numbers: Optional[List[float]] = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = _tokens(raw)
        if not tokens:
            continue
        head, col = tokens[0]

        if numbers is not None and head not in _NODE_KEYWORDS and head not in ("node", "query"):
            numbers.extend(_number(tok, lineno, c) for tok, c in tokens)
            continue
        numbers = None

        if head == "node":
            if len(tokens) < 3:
                raise ModelSyntaxError("expected: node <id> static|dynamic [flags]", lineno, col)
            node_id = _identifier(tokens[1][0], lineno, tokens[1][1])
            kind_tok, kind_col = tokens[2]
            try:
                kind = NodeKind(kind_tok)
            except ValueError:
                raise ModelSyntaxError(
                    f"node kind must be 'static' or 'dynamic', got {kind_tok!r}", lineno, kind_col
                ) from None
            flags = set()
            for tok, c in tokens[3:]:
                if tok not in _HEADER_FLAGS:
                    raise ModelSyntaxError(f"unknown node flag {tok!r}", lineno, c)
                flags.add(tok)
            current = _NodeBuilder(node_id, kind, flags, lineno)
            builders.append(current)
        elif head == "query":
            if len(tokens) != 2:
                raise ModelSyntaxError("expected: query <id>", lineno, col)
            queries.append((_identifier(tokens[1][0], lineno, tokens[1][1]), lineno))
            current = None
        elif head in _NODE_KEYWORDS:
            if current is None:
                raise ModelSyntaxError(f"{head!r} outside of a node block", lineno, col)
            rest = tokens[1:]
            if head == "states":
                current.states = [_identifier(tok, lineno, c) for tok, c in rest]
            elif head == "parents":
                for tok, c in rest:
                    m = _PREV.match(tok)
                    if m:
                        current.parents.append(ParentRef(_identifier(m.group(1), lineno, c + 5), 1))
                    else:
                        current.parents.append(ParentRef(_identifier(tok, lineno, c), 0))
            elif head == "initparents":
                current.init_parents = [_identifier(tok, lineno, c) for tok, c in rest]
            elif head == "cpt":
                numbers = current.cpt = [_number(tok, lineno, c) for tok, c in rest]
            else:
                numbers = current.init_cpt = [_number(tok, lineno, c) for tok, c in rest]
        else:
            raise ModelSyntaxError(f"unexpected token {head!r}", lineno, col)

    nodes = [b.build() for b in builders]
    declared: Dict[str, int] = {}
    for b in builders:
        if b.id in declared:
            raise ModelError(
                f"Duplicate node id {b.id!r} (lines {declared[b.id]} and {b.line})"
            )
        declared[b.id] = b.line
    for node in nodes:
        for ref in [p.node for p in node.parents] + list(node.init_parents):
            if ref not in declared:
                raise ModelError(f"Node {node.id!r} references undeclared node {ref!r}")
    for target, lineno in queries:
        if target not in declared:
            raise ModelError(f"Query on line {lineno} references undeclared node {target!r}")
    return TbnModel(nodes=tuple(nodes), query_targets=tuple(t for t, _ in queries))


def read_utf8(path: Union[str, Path], error: Callable[[str, int, int], TbnError]) -> str:
    """Read a text file, reporting undecodable bytes by position.

    Args:
        path: File to read.
        error: Builds the exception to raise from a message, a 1-based
            line and a 1-based column.

    Returns:
        The decoded text.

    Raises:
        OSError: If the file cannot be read.
    """
    data = Path(path).read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        line = data.count(b"\n", 0, e.start) + 1
        column = e.start - data.rfind(b"\n", 0, e.start)
        raise error(f"invalid UTF-8 byte 0x{data[e.start]:02x}", line, column) from None


def load_model(path: Union[str, Path]) -> TbnModel:
    """Read and parse a model file.

    Raises:
        ModelSyntaxError: On undecodable bytes or malformed lines.
        ModelError: On undeclared or duplicate names.
    """
    return parse_model(read_utf8(path, ModelSyntaxError))


def _format_rows(values, width: int) -> List[str]:
    rows = []
    for start in range(0, len(values), width):
        rows.append(" ".join(repr(float(v)) for v in values[start : start + width]))
    return rows


def format_model(model: TbnModel) -> str:
    """Serialize a model in the canonical file layout (inverse of parse_model)."""
    lines: List[str] = []
    for node in model.nodes:
        header = f"node {node.id} {node.kind.value}"
        if node.observable:
            header += " observable"
        if node.init_cpt is not None:
            header += " transitional-init"
        lines.append(header)
        lines.append("  states " + " ".join(node.states))
        if node.parents:
            lines.append("  parents " + " ".join(str(p) for p in node.parents))
        rows = _format_rows(node.cpt, node.card)
        lines.append("  cpt " + rows[0] if rows else "  cpt")
        lines.extend("      " + row for row in rows[1:])
        if node.init_cpt is not None:
            if node.init_parents:
                lines.append("  initparents " + " ".join(node.init_parents))
            rows = _format_rows(node.init_cpt, node.card)
            lines.append("  initcpt " + rows[0] if rows else "  initcpt")
            lines.extend("      " + row for row in rows[1:])
    for target in model.query_targets:
        lines.append(f"query {target}")
    return "\n".join(lines) + "\n"
