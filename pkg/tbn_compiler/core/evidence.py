"""Evidence stream records.

::

    obs <observable-id> <v1> <v2> ...   # likelihood for the pending step
    query <target-id>                   # emit the posterior now
    advance                             # commit the pending step
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

from ..errors import EvidenceStreamError
from .parser import read_utf8


@dataclass(frozen=True)
class Observe:
    line: int
    observable: str
    likelihood: Tuple[float, ...]


@dataclass(frozen=True)
class Query:
    line: int
    target: str


@dataclass(frozen=True)
class Advance:
    line: int


Record = Union[Observe, Query, Advance]


def parse_stream(text: str) -> List[Record]:
    """Parse an evidence stream.

    Raises:
        EvidenceStreamError: On a malformed record, naming its line.
    """
    records: List[Record] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        kind = tokens[0]
        if kind == "obs":
            if len(tokens) < 3:
                raise EvidenceStreamError("expected: obs <observable> <v1> <v2> ...", lineno)
            try:
                values = tuple(float(v) for v in tokens[2:])
            except ValueError as e:
                raise EvidenceStreamError(f"bad likelihood value ({e})", lineno) from None
            records.append(Observe(lineno, tokens[1], values))
        elif kind == "query":
            if len(tokens) != 2:
                raise EvidenceStreamError("expected: query <target>", lineno)
            records.append(Query(lineno, tokens[1]))
        elif kind == "advance":
            if len(tokens) != 1:
                raise EvidenceStreamError("'advance' takes no arguments", lineno)
            records.append(Advance(lineno))
        else:
            raise EvidenceStreamError(f"unknown record {kind!r}", lineno)
    return records


def _decode_error(message: str, line: int, column: int) -> EvidenceStreamError:
    return EvidenceStreamError(f"column {column}: {message}", line)


def load_stream(path: Union[str, Path]) -> List[Record]:
    """Read and parse an evidence stream file.

    Args:
        path: Stream file to read.

    Returns:
        The records in file order.

    Raises:
        EvidenceStreamError: On undecodable bytes or a malformed record.
    """
    return parse_stream(read_utf8(path, _decode_error))


def evidence_by_slice(records: List[Record]) -> List[Dict[str, Tuple[float, ...]]]:
    """Per-slice likelihood maps, last write wins within a slice.

    Slice k collects the ``obs`` records between the k-th and (k+1)-th
    ``advance``; the list always includes the pending slice.
    """
    slices: List[Dict[str, Tuple[float, ...]]] = [{}]
    for record in records:
        if isinstance(record, Advance):
            slices.append({})
        elif isinstance(record, Observe):
            slices[-1][record.observable] = record.likelihood
    return slices
