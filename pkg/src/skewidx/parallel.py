"""Multithreaded materialization, selection and aggregation.

Fact rows are split into ``T`` contiguous spans processed by a fork-join
thread pool. Kernels are numba functions compiled with ``nogil`` so the
threads run concurrently. Three aggregation strategies are available:

``independent``
    every thread owns a full-size result array; arrays are summed afterwards.
``shared_atomic``
    one shared array updated with atomic read-modify-write increments.
``hybrid``
    each thread owns a small array for the ``h`` hottest identifiers
    (``1..h`` after recoding); colder identifiers go to a shared array
    through atomic increments.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple

import numba
import numpy as np
from numba.core import cgutils
from numba.extending import intrinsic

from .columns import as_column, check_domain
from .operators import Bitmap, _count, _gather, _select

ACC_BYTES = 8
DEFAULT_HYBRID_HOT = 8192
LARGE_HYBRID_HOT = 262144


class AggStrategy(str, Enum):
    INDEPENDENT = "independent"
    SHARED_ATOMIC = "shared_atomic"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class ParallelPlan:
    threads: int = 1
    strategy: AggStrategy = AggStrategy.INDEPENDENT
    hot_threshold: int = DEFAULT_HYBRID_HOT

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("need at least one thread")
        object.__setattr__(self, "strategy", AggStrategy(self.strategy))
        if self.hot_threshold < 1:
            raise ValueError("hot threshold must be >= 1")

    def spans(self, n: int) -> List[Tuple[int, int]]:
        """Disjoint near-equal ``[start, stop)`` spans covering ``range(n)``."""
        T = self.threads
        bounds = [(i * n) // T for i in range(T + 1)]
        return list(zip(bounds[:-1], bounds[1:]))


@intrinsic
def _atomic_add(typingctx, arr, idx, val):
    """Relaxed (monotonic) atomic ``arr[idx] += val``; returns the old value."""
    sig = arr.dtype(arr, idx, val)

    def codegen(context, builder, signature, args):
        arr_t, _, val_t = signature.args
        ary = context.make_array(arr_t)(context, builder, args[0])
        ptr = cgutils.get_item_pointer(context, builder, arr_t, ary, [args[1]], wraparound=False)
        v = context.cast(builder, args[2], val_t, arr_t.dtype)
        return builder.atomic_rmw("add", ptr, v, "monotonic")

    return sig, codegen


@numba.njit(cache=True, nogil=True)
def _count_atomic(fact, shared):
    for k in range(fact.shape[0]):
        _atomic_add(shared, np.int64(fact[k] - 1), 1)


@numba.njit(cache=True, nogil=True)
def _count_hybrid(fact, private, shared, h):
    cold = 0
    for k in range(fact.shape[0]):
        v = fact[k]
        if v <= h:
            private[v - 1] += 1
        else:
            _atomic_add(shared, np.int64(v - 1), 1)
            cold += 1
    return cold


def _run(plan: ParallelPlan, fn, n: int):
    spans = plan.spans(n)
    if plan.threads == 1:
        return [fn(*spans[0])]
    with ThreadPoolExecutor(max_workers=plan.threads) as pool:
        return list(pool.map(lambda s: fn(*s), spans))


def parallel_materialize(fact, dim, plan: ParallelPlan, check: bool = True) -> np.ndarray:
    fact = as_column(fact)
    dim = np.ascontiguousarray(dim)
    if check:
        check_domain(fact, dim.shape[0])
    out = np.empty(fact.shape[0], dtype=dim.dtype)

    def work(start, stop):
        _gather(fact[start:stop], dim, out[start:stop])

    _run(plan, work, fact.shape[0])
    return out


def parallel_select(fact, bitmap: Bitmap, plan: ParallelPlan, check: bool = True) -> np.ndarray:
    fact = as_column(fact)
    if check:
        check_domain(fact, bitmap.length)

    def work(start, stop):
        local = np.empty(stop - start + 1, dtype=np.int64)
        n = _select(fact[start:stop], bitmap.bits, local, start)
        return local[:n]

    parts = _run(plan, work, fact.shape[0])
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)


@dataclass(frozen=True)
class AggregateRun:
    counts: np.ndarray
    elapsed_ns: int
    updates: int
    shared_updates: int
    accumulator_bytes: int

    @property
    def shared_fraction(self) -> float:
        return self.shared_updates / self.updates if self.updates else 0.0


def memory_footprint(plan: ParallelPlan, cardinality: int) -> int:
    """Accumulator bytes a strategy allocates for a domain of ``cardinality``."""
    if plan.strategy is AggStrategy.INDEPENDENT:
        return plan.threads * cardinality * ACC_BYTES
    if plan.strategy is AggStrategy.SHARED_ATOMIC:
        return cardinality * ACC_BYTES
    return cardinality * ACC_BYTES + plan.threads * plan.hot_threshold * ACC_BYTES


def run_parallel_aggregate(fact, cardinality: int, plan: ParallelPlan, check: bool = True) -> AggregateRun:
    """Count references per identifier with ``plan``'s strategy and report metrics.

    For ``hybrid`` the column must be recoded so identifiers ``1..h`` are the
    hottest; correctness does not depend on it, only the split does.
    """
    fact = as_column(fact)
    if check:
        check_domain(fact, cardinality)
    n = fact.shape[0]
    strategy = plan.strategy
    t0 = time.perf_counter_ns()

    if strategy is AggStrategy.INDEPENDENT:
        def work(start, stop):
            acc = np.zeros(cardinality, dtype=np.int64)
            _count(fact[start:stop], acc)
            return acc

        partial = _run(plan, work, n)
        counts = partial[0]
        for acc in partial[1:]:
            counts += acc
        shared = 0

    elif strategy is AggStrategy.SHARED_ATOMIC:
        counts = np.zeros(cardinality, dtype=np.int64)
        _run(plan, lambda a, b: _count_atomic(fact[a:b], counts), n)
        shared = n

    else:
        if not 1 <= plan.hot_threshold <= cardinality:
            raise ValueError(f"hot threshold {plan.hot_threshold} outside 1..{cardinality}")
        h = plan.hot_threshold
        counts = np.zeros(cardinality, dtype=np.int64)

        def work(start, stop):
            private = np.zeros(h, dtype=np.int64)
            cold = _count_hybrid(fact[start:stop], private, counts, np.uint32(h))
            return private, cold

        results = _run(plan, work, n)
        # fold after the pool has joined
        for private, _ in results:
            counts[:h] += private
        shared = int(sum(cold for _, cold in results))

    elapsed = time.perf_counter_ns() - t0
    return AggregateRun(counts, elapsed, n, shared, memory_footprint(plan, cardinality))


def parallel_aggregate(fact, cardinality: int, plan: ParallelPlan, check: bool = True) -> np.ndarray:
    return run_parallel_aggregate(fact, cardinality, plan, check).counts

