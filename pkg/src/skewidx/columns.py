"""Columnar storage primitives, Zipf workload generation and column file I/O.

A column is a dense ``numpy.uint32`` array. Foreign-key columns hold 1-based
identifiers into a dimension of cardinality ``D``; identifier 0 is reserved.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np

from .errors import ColumnFormatError, DomainError, InvalidSpecError, LengthMismatchError

COLUMN_DTYPE = np.dtype("<u4")
MAX_CARDINALITY = 2**32 - 2

COLUMN_MAGIC = b"SKDX"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQ")

PathLike = Union[str, "os.PathLike[str]"]


class Layout(str, Enum):
    """How dimension identifiers relate to frequency rank."""

    RAND = "rand"
    FREQ = "freq"


@dataclass(frozen=True)
class ZipfSpec:
    domain_cardinality: int
    tuple_count: int
    z: float
    seed: int = 0

    def validate(self) -> None:
        if self.domain_cardinality < 1:
            raise InvalidSpecError("domain cardinality must be >= 1")
        if self.domain_cardinality > MAX_CARDINALITY:
            raise InvalidSpecError(f"domain cardinality exceeds {MAX_CARDINALITY}")
        if self.tuple_count < 1:
            raise InvalidSpecError("tuple count must be >= 1")
        if not (self.z >= 0.0) or not np.isfinite(self.z):
            raise InvalidSpecError("zipf exponent must be a finite value >= 0")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpecError("seed must fit in 64 unsigned bits")


def as_column(values) -> np.ndarray:
    """Return ``values`` as a contiguous uint32 column (no copy if already one)."""
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValueError("a column is one-dimensional")
    if arr.size and arr.dtype.kind in "iu":
        if arr.min() < 0 or arr.max() > np.iinfo(np.uint32).max:
            raise ValueError("column values must fit in 32 unsigned bits")
    elif arr.size and arr.dtype.kind not in "iu":
        raise ValueError(f"column values must be integers, got {arr.dtype}")
    return np.ascontiguousarray(arr, dtype=np.uint32)


def check_domain(fact: np.ndarray, cardinality: int) -> None:
    """Raise :class:`DomainError` for the first value outside ``1..cardinality``."""
    if fact.size == 0:
        return
    bad = (fact == 0) | (fact > cardinality)
    if bad.any():
        row = int(np.argmax(bad))
        raise DomainError(row, int(fact[row]), cardinality)


def zipf_frequencies(spec: ZipfSpec) -> np.ndarray:
    """Normalized Zipf probabilities ``p[r-1] ∝ r**-z`` for ranks ``1..D``."""
    if spec.domain_cardinality < 1:
        raise InvalidSpecError("domain cardinality must be >= 1")
    if not spec.z >= 0.0:
        raise InvalidSpecError("zipf exponent must be >= 0")
    ranks = np.arange(1, spec.domain_cardinality + 1, dtype=np.float64)
    weights = ranks ** (-float(spec.z))
    return weights / weights.sum()


def _streams(seed: int):
    # independent, reproducible substreams: bijection, draws, tuple shuffle
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def random_bijection(cardinality: int, seed: int) -> np.ndarray:
    """Seeded Fisher-Yates permutation of ``1..cardinality``.

    Element ``r-1`` is the identifier assigned to frequency rank ``r`` under
    the ``rand`` layout. Shared with the cache model so estimates and
    generated traces use the same mapping for a given seed.
    """
    rng = _streams(seed)[0]
    perm = np.arange(1, cardinality + 1, dtype=np.uint32)
    rng.shuffle(perm)
    return perm


def sample_ranks(probabilities: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. 1-based ranks by inverse CDF over ``probabilities``."""
    cdf = np.cumsum(probabilities)
    cdf[-1] = 1.0
    u = rng.random(n)
    ranks = np.searchsorted(cdf, u, side="right")
    np.minimum(ranks, len(cdf) - 1, out=ranks)
    return (ranks + 1).astype(np.uint32)


def generate_fact_column(
    spec: ZipfSpec, layout: Union[Layout, str] = Layout.FREQ
) -> Tuple[np.ndarray, np.ndarray]:
    """Generate a Zipf-distributed foreign-key column.

    Returns ``(column, counts)`` where ``counts[id-1]`` is the exact number of
    occurrences of ``id``. Under ``freq`` the identifier equals the rank
    (identifier 1 is the most frequent item); under ``rand`` ranks are mapped
    through :func:`random_bijection`.
    """
    spec.validate()
    layout = Layout(layout)
    _, draw_rng, shuffle_rng = _streams(spec.seed)
    p = zipf_frequencies(spec)
    col = sample_ranks(p, spec.tuple_count, draw_rng)
    if layout is Layout.RAND:
        col = random_bijection(spec.domain_cardinality, spec.seed)[col - 1]
    shuffle_rng.shuffle(col)
    counts = np.bincount(col, minlength=spec.domain_cardinality + 1)[1:].astype(np.int64)
    return col, counts


def write_column(path: PathLike, column) -> None:
    col = as_column(column)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(COLUMN_MAGIC, FORMAT_VERSION, col.size))
        fh.write(col.astype(COLUMN_DTYPE, copy=False).tobytes())


def _read_header(fh, magic: bytes) -> int:
    raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise LengthMismatchError("file shorter than its 16-byte header")
    got_magic, version, count = _HEADER.unpack(raw)
    if got_magic != magic:
        raise ColumnFormatError(f"bad magic {got_magic!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise ColumnFormatError(f"unsupported format version {version}")
    return count


def _read_u32(fh, count: int) -> np.ndarray:
    data = fh.read(count * 4)
    if len(data) != count * 4:
        raise LengthMismatchError(
            f"header declares {count} values, file holds {len(data) // 4}"
        )
    return np.frombuffer(data, dtype=COLUMN_DTYPE).astype(np.uint32)


def read_column(path: PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        count = _read_header(fh, COLUMN_MAGIC)
        col = _read_u32(fh, count)
        if fh.read(1):
            raise LengthMismatchError(f"trailing bytes after {count} declared values")
    return col
