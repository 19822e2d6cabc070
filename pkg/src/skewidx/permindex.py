"""Permutation indexes: frequency-ranked bijections over a dimension domain.

An index stores both directions explicitly. ``offsets[r-1]`` is the original
identifier holding frequency rank ``r`` and ``ranks[i-1]`` is the rank of
original identifier ``i``. Recoding a fact column replaces every reference
``i`` with ``ranks[i-1]``; permuting a dimension column reorders it so that
row ``r-1`` holds what used to be row ``offsets[r-1]-1``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .columns import (
    FORMAT_VERSION,
    MAX_CARDINALITY,
    PathLike,
    _read_header,
    _read_u32,
    as_column,
    check_domain,
)
from .errors import IdentifierSpaceExhausted, LengthMismatchError

INDEX_MAGIC = b"SKPI"


@dataclass(frozen=True)
class FrequencyProfile:
    counts: np.ndarray  # int64, counts[i-1] = occurrences of identifier i
    total: int

    @property
    def cardinality(self) -> int:
        return int(self.counts.size)

    def count(self, identifier: int) -> int:
        return int(self.counts[identifier - 1])


@dataclass(frozen=True)
class PermutationIndex:
    offsets: np.ndarray  # uint32, rank -> original id
    ranks: np.ndarray  # uint32, original id -> rank

    @property
    def cardinality(self) -> int:
        return int(self.offsets.size)

    def rank_of(self, identifier: int) -> int:
        return int(self.ranks[identifier - 1])

    def identifier_at(self, rank: int) -> int:
        return int(self.offsets[rank - 1])

    def is_bijection(self) -> bool:
        D = self.cardinality
        if self.ranks.size != D:
            return False
        if D == 0:
            return True
        ids = np.arange(1, D + 1, dtype=np.uint32)
        if self.offsets.min() < 1 or self.offsets.max() > D:
            return False
        if self.ranks.min() < 1 or self.ranks.max() > D:
            return False
        return bool(
            np.array_equal(self.ranks[self.offsets - 1], ids)
            and np.array_equal(self.offsets[self.ranks - 1], ids)
        )

    @classmethod
    def identity(cls, cardinality: int) -> "PermutationIndex":
        ids = np.arange(1, cardinality + 1, dtype=np.uint32)
        return cls(ids, ids.copy())


def count_frequencies(fact, cardinality: int) -> FrequencyProfile:
    fact = as_column(fact)
    check_domain(fact, cardinality)
    counts = np.bincount(fact, minlength=cardinality + 1)[1:].astype(np.int64)
    return FrequencyProfile(counts, int(fact.size))


def build_index(profile: FrequencyProfile) -> PermutationIndex:
    """Sort identifiers by count descending, ties by ascending identifier.

    Identifiers that never occur still get ranks, after every occurring one.
    """
    counts = np.asarray(profile.counts)
    D = counts.size
    # lexsort is stable and sorts by the last key first
    order = np.lexsort((np.arange(D), -counts.astype(np.int64)))
    offsets = (order + 1).astype(np.uint32)
    ranks = np.empty(D, dtype=np.uint32)
    ranks[order] = np.arange(1, D + 1, dtype=np.uint32)
    return PermutationIndex(offsets, ranks)


def rebuild(fact, cardinality: int) -> PermutationIndex:
    return build_index(count_frequencies(fact, cardinality))


def recode_fact(fact, index: PermutationIndex) -> np.ndarray:
    fact = as_column(fact)
    check_domain(fact, index.cardinality)
    return index.ranks[fact.astype(np.intp) - 1]


def decode_fact(recoded, index: PermutationIndex) -> np.ndarray:
    """Inverse of :func:`recode_fact`: map rank identifiers back to originals."""
    recoded = as_column(recoded)
    check_domain(recoded, index.cardinality)
    return index.offsets[recoded.astype(np.intp) - 1]


def permute_dimension(dim, index: PermutationIndex) -> np.ndarray:
    """Reorder a dimension column so popular rows sit at low positions.

    Works on any 1-D array (not just uint32) so payload columns keep their dtype.
    """
    dim = np.asarray(dim)
    if dim.shape[0] != index.cardinality:
        raise LengthMismatchError(
            f"dimension has {dim.shape[0]} rows, index covers {index.cardinality}"
        )
    return dim[index.offsets.astype(np.intp) - 1]


def unpermute_dimension(permuted, index: PermutationIndex) -> np.ndarray:
    permuted = np.asarray(permuted)
    if permuted.shape[0] != index.cardinality:
        raise LengthMismatchError(
            f"dimension has {permuted.shape[0]} rows, index covers {index.cardinality}"
        )
    return permuted[index.ranks.astype(np.intp) - 1]


def append_dimension_row(index: PermutationIndex) -> Tuple[int, PermutationIndex]:
    """Register a new dimension row as the least frequent item.

    Returns the new identifier and a new index; existing mappings are kept.
    Fact-table drift is ignored until :func:`rebuild`.
    """
    D = index.cardinality
    if D + 1 > MAX_CARDINALITY:
        raise IdentifierSpaceExhausted(f"cannot exceed {MAX_CARDINALITY} identifiers")
    new_id = D + 1
    offsets = np.append(index.offsets, np.uint32(new_id))
    ranks = np.append(index.ranks, np.uint32(new_id))
    return new_id, PermutationIndex(offsets.astype(np.uint32), ranks.astype(np.uint32))


def write_index(path: PathLike, index: PermutationIndex) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIQ", INDEX_MAGIC, FORMAT_VERSION, index.cardinality))
        fh.write(index.offsets.astype("<u4", copy=False).tobytes())
        fh.write(index.ranks.astype("<u4", copy=False).tobytes())


def read_index(path: PathLike) -> PermutationIndex:
    with open(path, "rb") as fh:
        D = _read_header(fh, INDEX_MAGIC)
        offsets = _read_u32(fh, D)
        ranks = _read_u32(fh, D)
        if fh.read(1):
            raise LengthMismatchError("trailing bytes after index arrays")
    return PermutationIndex(offsets, ranks)
