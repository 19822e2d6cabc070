"""Loaders for real datasets: SNAP edge lists and keyed CSV files."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import SkewIndexError


class IngestError(SkewIndexError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class SnapGraph:
    fact: np.ndarray  # destination node references, 1-based dense identifiers
    nodes: np.ndarray  # nodes[i-1] is the original id of dense identifier i
    edges: int

    @property
    def cardinality(self) -> int:
        return int(self.nodes.size)

    @property
    def empty(self) -> bool:
        return self.edges == 0


def read_snap_edges(path) -> SnapGraph:
    """Parse a whitespace separated ``src dst`` edge list.

    Lines starting with ``#`` and blank lines are skipped. Node ids are
    densified over the union of sources and destinations (ascending original
    id) and the fact column holds one destination reference per edge.
    """
    src: List[int] = []
    dst: List[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise IngestError(f"expected 'src dst', got {stripped!r}", lineno)
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise IngestError(f"non-integer node id in {stripped!r}", lineno) from None
            if a < 0 or b < 0:
                raise IngestError("negative node id", lineno)
            src.append(a)
            dst.append(b)
    if not dst:
        return SnapGraph(np.empty(0, np.uint32), np.empty(0, np.uint64), 0)
    s = np.asarray(src, dtype=np.int64)
    d = np.asarray(dst, dtype=np.int64)
    nodes = np.unique(np.concatenate([s, d]))
    fact = (np.searchsorted(nodes, d) + 1).astype(np.uint32)
    return SnapGraph(fact, nodes.astype(np.uint64), int(d.size))


@dataclass(frozen=True)
class KeyedColumn:
    fact: np.ndarray
    dictionary: List[str]  # dictionary[i-1] is the key for identifier i

    @property
    def cardinality(self) -> int:
        return len(self.dictionary)


def read_keyed_csv(path, key_column: str) -> KeyedColumn:
    """Dictionary-encode one CSV column to dense 1-based identifiers.

    Identifiers follow first appearance order.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise IngestError("empty file")
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise IngestError(f"duplicate header names: {dupes}", 1)
        if key_column not in header:
            raise IngestError(f"missing column {key_column!r}", 1)
        pos = header.index(key_column)
        codes: dict[str, int] = {}
        values: List[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) <= pos:
                raise IngestError(f"row has {len(row)} fields, key is field {pos + 1}", lineno)
            key = row[pos]
            code = codes.get(key)
            if code is None:
                code = codes[key] = len(codes) + 1
            values.append(code)
    if not values:
        raise IngestError("no data rows")
    return KeyedColumn(np.asarray(values, dtype=np.uint32), list(codes))
