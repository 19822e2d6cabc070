"""Single-threaded skew-aware operators over foreign-key columns.

Materialization gathers dimension values through fact references, selection
tests a per-dimension bitmap, and aggregation counts references per
identifier. The threshold variants rely on the fact column being recoded
through a permutation index, so a small identifier means a popular item.

Inner loops are numba kernels; the public wrappers validate inputs once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numba
import numpy as np

from .columns import as_column, check_domain
from .errors import CorrectnessGateError, LengthMismatchError
from .permindex import PermutationIndex

DEFAULT_LANES = 16
DEFAULT_HOT_COPIES = 40
DEFAULT_TOP_K = 4000


# -- kernels -----------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _gather(fact, dim, out):
    for k in range(fact.shape[0]):
        out[k] = dim[fact[k] - 1]


@numba.njit(cache=True, nogil=True)
def _gather_split(fact, dim, out, t):
    n = fact.shape[0]
    buf_pos = np.empty(n, dtype=np.int64)
    tail = 0
    for k in range(n):
        v = fact[k]
        if v <= t:
            out[k] = dim[v - 1]
        else:
            buf_pos[tail] = k
            tail += 1
    for j in range(tail):
        k = buf_pos[j]
        out[k] = dim[fact[k] - 1]
    return tail


@numba.njit(cache=True, nogil=True)
def _select(fact, bits, out, base):
    j = 0
    for k in range(fact.shape[0]):
        i = fact[k] - 1
        out[j] = base + k
        j += (bits[i >> 3] >> (i & 7)) & 1
    return j


@numba.njit(cache=True, nogil=True)
def _count(fact, acc):
    for k in range(fact.shape[0]):
        acc[fact[k] - 1] += 1


@numba.njit(cache=True, nogil=True)
def _sum(fact, payload, acc):
    for k in range(fact.shape[0]):
        acc[fact[k] - 1] += payload[k]


@numba.njit(cache=True, nogil=True)
def _count_lanecopy(fact, main, hot, t, lanes):
    n = fact.shape[0]
    for base in range(0, n, lanes):
        stop = min(base + lanes, n)
        for k in range(base, stop):
            v = fact[k]
            if v <= t:
                hot[(k - base) * t + v - 1] += 1
            else:
                main[v - 1] += 1
    for lane in range(lanes):
        off = lane * t
        for r in range(t):
            main[r] += hot[off + r]
            hot[off + r] = 0


_CUTOFF_BLOCK = 1024


@numba.njit(cache=True, nogil=True)
def _count_cutoff(fact, acc, k_limit):
    # compress qualifying ids into an L1-sized buffer without branching,
    # then count only those
    n = fact.shape[0]
    buf = np.empty(_CUTOFF_BLOCK, dtype=np.uint32)
    for base in range(0, n, _CUTOFF_BLOCK):
        stop = min(base + _CUTOFF_BLOCK, n)
        j = 0
        for k in range(base, stop):
            v = fact[k]
            buf[j] = v
            j += v <= k_limit
        for q in range(j):
            acc[buf[q] - 1] += 1


@numba.njit(cache=True, nogil=True)
def _count_cutoff_branchy(fact, acc, k_limit):
    for k in range(fact.shape[0]):
        v = fact[k]
        if v <= k_limit:
            acc[v - 1] += 1


# -- materialization ---------------------------------------------------------

def materialize(fact, dim, check: bool = True) -> np.ndarray:
    """``out[k] = dim[fact[k] - 1]``."""
    fact = as_column(fact)
    dim = np.ascontiguousarray(dim)
    if check:
        check_domain(fact, dim.shape[0])
    out = np.empty(fact.shape[0], dtype=dim.dtype)
    _gather(fact, dim, out)
    return out


def _check_threshold(t: int, cardinality: int) -> None:
    if not 1 <= t <= cardinality:
        raise ValueError(f"threshold {t} outside 1..{cardinality}")


def materialize_split(fact, dim, threshold: int, check: bool = True, return_deferred: bool = False):
    """Two-pass materialization over a recoded column.

    References ``<= threshold`` (likely cache hits) are resolved in the first
    pass; the rest have their row positions buffered and are resolved in a
    second pass. Output equals :func:`materialize`. With
    ``return_deferred=True`` also returns how many rows went to the buffer.
    """
    fact = as_column(fact)
    dim = np.ascontiguousarray(dim)
    _check_threshold(threshold, dim.shape[0])
    if check:
        check_domain(fact, dim.shape[0])
    out = np.empty(fact.shape[0], dtype=dim.dtype)
    deferred = _gather_split(fact, dim, out, np.uint32(threshold))
    if return_deferred:
        return out, int(deferred)
    return out


def split_threshold_for_cache(cache_bytes: int, element_bytes: int, cardinality: int) -> int:
    """Largest ``t`` whose hot region ``t * element_bytes`` fits in ``cache_bytes``."""
    return int(min(max(cache_bytes // element_bytes, 1), cardinality))


# -- selection ---------------------------------------------------------------

@dataclass(frozen=True)
class Bitmap:
    bits: np.ndarray  # packed uint8, little bit order; bit i-1 belongs to identifier i
    length: int

    @classmethod
    def from_bools(cls, mask) -> "Bitmap":
        mask = np.asarray(mask, dtype=bool)
        return cls(np.packbits(mask, bitorder="little"), int(mask.size))

    def to_bools(self) -> np.ndarray:
        return np.unpackbits(self.bits, count=self.length, bitorder="little").astype(bool)

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, identifier: int) -> bool:
        i = identifier - 1
        if not 0 <= i < self.length:
            raise IndexError(identifier)
        return bool((self.bits[i >> 3] >> (i & 7)) & 1)

    def permuted(self, index: PermutationIndex) -> "Bitmap":
        """Bitmap addressed by rank instead of original identifier."""
        mask = self.to_bools()
        if mask.size != index.cardinality:
            raise LengthMismatchError("bitmap length differs from index cardinality")
        return Bitmap.from_bools(mask[index.offsets.astype(np.intp) - 1])


def build_bitmap(dim_values, predicate: Callable[[np.ndarray], np.ndarray]) -> Bitmap:
    """Evaluate a vectorized ``predicate`` over a dimension column."""
    values = np.asarray(dim_values)
    mask = np.asarray(predicate(values), dtype=bool) if values.size else np.zeros(0, bool)
    if mask.shape != values.shape:
        raise ValueError("predicate must return one boolean per dimension row")
    return Bitmap.from_bools(mask)


def select(fact, bitmap: Bitmap, check: bool = True) -> np.ndarray:
    """Ascending 0-based row offsets whose referenced bit is set."""
    fact = as_column(fact)
    if check:
        check_domain(fact, bitmap.length)
    out = np.empty(fact.shape[0] + 1, dtype=np.int64)
    n = _select(fact, bitmap.bits, out, 0)
    return out[:n].copy()


# -- aggregation -------------------------------------------------------------

def aggregate_count(fact, cardinality: int, check: bool = True) -> np.ndarray:
    """Per-identifier counts; ``counts[i-1]`` counts identifier ``i``."""
    fact = as_column(fact)
    if check:
        check_domain(fact, cardinality)
    acc = np.zeros(cardinality, dtype=np.int64)
    _count(fact, acc)
    return acc


def aggregate_sum(fact, payload, cardinality: int, check: bool = True) -> np.ndarray:
    """Per-identifier 64-bit sums of an integer payload column."""
    fact = as_column(fact)
    payload = np.ascontiguousarray(payload, dtype=np.int64)
    if payload.shape != fact.shape:
        raise LengthMismatchError("payload length differs from fact length")
    if check:
        check_domain(fact, cardinality)
    acc = np.zeros(cardinality, dtype=np.int64)
    _sum(fact, payload, acc)
    return acc


@dataclass
class AggState:
    """Accumulators for lane-copy aggregation.

    Lane ``l``'s copy of identifier ``r`` (``r <= hot``) sits at
    ``hot_copies[l * hot + r - 1]``.
    """

    main: np.ndarray
    hot_copies: np.ndarray
    hot: int
    lanes: int

    @classmethod
    def allocate(cls, cardinality: int, hot: int, lanes: int) -> "AggState":
        return cls(
            np.zeros(cardinality, dtype=np.int64),
            np.zeros(hot * lanes, dtype=np.int64),
            hot,
            lanes,
        )

    @property
    def extra_bytes(self) -> int:
        return self.hot_copies.nbytes


def aggregate_count_lanecopy(
    fact,
    cardinality: int,
    hot: int = DEFAULT_HOT_COPIES,
    lanes: int = DEFAULT_LANES,
    check: bool = True,
    state: AggState | None = None,
) -> np.ndarray:
    """Count with per-lane copies of the ``hot`` most frequent identifiers.

    Rows are processed in strips of ``lanes``; the row's position in its
    strip picks the copy, so two lanes never update the same hot slot.
    The copies are folded into the main array at the end.
    """
    fact = as_column(fact)
    _check_threshold(hot, cardinality)
    if lanes < 1:
        raise ValueError("lane count must be >= 1")
    if check:
        check_domain(fact, cardinality)
    if state is None:
        state = AggState.allocate(cardinality, hot, lanes)
    _count_lanecopy(fact, state.main, state.hot_copies, np.uint32(hot), lanes)
    return state.main


@dataclass(frozen=True)
class HeavyHitters:
    identifiers: np.ndarray
    counts: np.ndarray
    clamped: bool = False
    accumulator_entries: int = 0

    def items(self):
        return list(zip(self.identifiers.tolist(), self.counts.tolist()))

    def __len__(self) -> int:
        return int(self.identifiers.size)


def _rank_order(ids: np.ndarray, counts: np.ndarray) -> np.ndarray:
    return np.lexsort((ids, -counts))


def heavy_hitter_count(
    fact,
    k: int = DEFAULT_TOP_K,
    cardinality: int | None = None,
    branchy: bool = False,
    check: bool = True,
) -> HeavyHitters:
    """Exact counts for identifiers ``1..k`` of a recoded column.

    On a column recoded by an up-to-date index these are the ``k`` most
    frequent items. The accumulator holds exactly ``k`` entries. ``k`` larger
    than ``cardinality`` is clamped and flagged.
    """
    fact = as_column(fact)
    if k < 1:
        raise ValueError("k must be >= 1")
    clamped = False
    if cardinality is not None:
        if check:
            check_domain(fact, cardinality)
        if k > cardinality:
            k, clamped = cardinality, True
    elif check:
        check_domain(fact, np.iinfo(np.uint32).max)
    acc = np.zeros(k, dtype=np.int64)
    (_count_cutoff_branchy if branchy else _count_cutoff)(fact, acc, np.uint32(k))
    ids = np.arange(1, k + 1, dtype=np.int64)
    order = _rank_order(ids, acc)
    return HeavyHitters(ids[order], acc[order], clamped, int(acc.size))


def top_k_from_counts(counts, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Top ``k`` (identifier, count) pairs of a full count array, same ordering."""
    counts = np.asarray(counts, dtype=np.int64)
    ids = np.arange(1, counts.size + 1, dtype=np.int64)
    order = _rank_order(ids, counts)[:k]
    return ids[order], counts[order]


def verify_heavy_hitters(fact, k: int, cardinality: int) -> bool:
    """True when identifiers ``1..k`` are still the true top-``k`` of ``fact``.

    Compares against full aggregation; use it to detect index drift.
    """
    fast = heavy_hitter_count(fact, k, cardinality)
    ids, counts = top_k_from_counts(aggregate_count(fact, cardinality), min(k, cardinality))
    return bool(np.array_equal(fast.identifiers, ids) and np.array_equal(fast.counts, counts))


def require_heavy_hitters(fact, k: int, cardinality: int) -> HeavyHitters:
    if not verify_heavy_hitters(fact, k, cardinality):
        raise CorrectnessGateError("identifiers 1..k are not the top-k; rebuild the index")
    return heavy_hitter_count(fact, k, cardinality)
