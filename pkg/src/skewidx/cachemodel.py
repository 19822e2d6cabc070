"""Analytical LRU hit-rate estimation from cache-line access frequencies.

The estimator treats the gap until line ``i`` is referenced again as a
geometric variable with success probability ``f_i``. Over ``k`` trials every
other line ``j`` is expected ``n_j = k * f_j / (1 - f_i)`` times, so the
number of distinct intervening lines is about

    d(k) = k - sum_{j != i} max(0, n_j - 1)

A reference to line ``i`` hits while fewer than ``S`` distinct lines came in
between. With ``K`` the smallest trial count where ``d(K)`` reaches ``S``, the
hit probability for line ``i`` is ``1 - (1 - f_i)**K`` and the overall hit
rate is the frequency-weighted sum over lines.

:func:`simulate_lru` is an exact fully associative LRU simulator used as the
independent check for the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numba
import numpy as np

from .columns import Layout, ZipfSpec, as_column, generate_fact_column, random_bijection, zipf_frequencies
from .errors import InvalidGeometryError

K_LIMIT = 2**40
_NEAR_ONE = 1.0 - 1e-12


@dataclass(frozen=True)
class CacheGeometry:
    lines: int
    line_bytes: int = 64
    element_bytes: int = 4

    def __post_init__(self):
        if self.lines < 1:
            raise InvalidGeometryError("cache must have at least one line")
        if self.element_bytes < 1 or self.line_bytes % self.element_bytes:
            raise InvalidGeometryError("line size must be a multiple of the element size")

    @property
    def elements_per_line(self) -> int:
        return self.line_bytes // self.element_bytes

    @property
    def capacity_bytes(self) -> int:
        return self.lines * self.line_bytes


def line_frequencies(
    value_freqs,
    layout: Union[Layout, str],
    geometry: CacheGeometry,
    seed: int = 0,
) -> np.ndarray:
    """Aggregate per-value access frequencies into per-line frequencies.

    ``value_freqs[r-1]`` is the frequency of the rank-``r`` value. Under
    ``freq`` the rank is the address, so line ``i`` sums ranks
    ``i*E+1 .. (i+1)*E``. Under ``rand`` values are first placed by
    :func:`random_bijection` with the same ``seed`` used for generation.
    """
    p = np.asarray(value_freqs, dtype=np.float64)
    if p.size == 0:
        raise ValueError("empty frequency vector")
    layout = Layout(layout)
    if layout is Layout.RAND:
        placed = np.empty_like(p)
        placed[random_bijection(p.size, seed).astype(np.intp) - 1] = p
        p = placed
    E = geometry.elements_per_line
    pad = (-p.size) % E
    if pad:
        p = np.concatenate([p, np.zeros(pad)])
    return p.reshape(-1, E).sum(axis=1)


def _distinct_estimate(K, fi, sorted_f, prefix):
    """Vectorized d(K) for lines with frequency ``fi`` (arrays of equal shape)."""
    c = K / (1.0 - fi)
    thr = 1.0 / c
    # lines j with c * f_j > 1; sorted_f is descending
    m = np.searchsorted(-sorted_f, -thr, side="left")
    mass = np.where(m > 0, prefix[np.maximum(m - 1, 0)], 0.0)
    excess = c * mass - m
    # drop line i itself when it was counted
    excess = excess - np.where(fi > thr, c * fi - 1.0, 0.0)
    return K - excess


def threshold_trials(f, S: int) -> np.ndarray:
    """Per-line threshold ``K`` (smallest integer with ``d(K) >= S``).

    Lines whose estimate never reaches ``S`` before ``K_LIMIT`` get
    ``K_LIMIT``. Lines with zero frequency get 0.
    """
    f = np.asarray(f, dtype=np.float64)
    sorted_f = np.sort(f[f > 0])[::-1]
    prefix = np.cumsum(sorted_f)
    out = np.zeros(f.size, dtype=np.int64)
    live = (f > 0) & (f < _NEAR_ONE)
    uniq, inverse = np.unique(f[live], return_inverse=True)
    if uniq.size == 0:
        return out
    target = S - 1e-9

    def reached(K, fi=uniq):
        return _distinct_estimate(K.astype(np.float64), fi, sorted_f, prefix) >= target

    hi = np.full(uniq.size, S, dtype=np.int64)
    pending = ~reached(hi)
    while pending.any():
        hi[pending] = np.minimum(hi[pending] * 2, K_LIMIT)
        pending &= hi < K_LIMIT
        pending[pending] = ~reached(hi[pending], uniq[pending])
    # invariant: reached(hi) or hi == K_LIMIT; d(S) <= S so lo = S - 1 is "not reached"
    lo = np.full(uniq.size, S - 1, dtype=np.int64)
    ok = reached(hi)
    lo[~ok] = K_LIMIT - 1
    hi[~ok] = K_LIMIT
    while True:
        gap = hi - lo > 1
        if not gap.any():
            break
        mid = (lo + hi) // 2
        r = reached(mid)
        hi = np.where(gap & r, mid, hi)
        lo = np.where(gap & ~r, mid, lo)
    out[live] = hi[inverse]
    out[f >= _NEAR_ONE] = S
    return out


def estimate_hit_rate(f, S: int) -> float:
    """Estimated steady-state LRU hit rate for line frequencies ``f`` and ``S`` lines."""
    if S < 1:
        raise InvalidGeometryError("cache must have at least one line")
    f = np.asarray(f, dtype=np.float64)
    if f.size == 0:
        raise ValueError("empty frequency vector")
    if (f < 0).any():
        raise ValueError("line frequencies must be non-negative")
    total = f.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"line frequencies sum to {total!r}, expected 1")
    if np.count_nonzero(f) <= S:
        return 1.0
    K = threshold_trials(f, S).astype(np.float64)
    with np.errstate(divide="ignore"):
        cdf = -np.expm1(K * np.log1p(-np.minimum(f, _NEAR_ONE)))
    cdf[f >= _NEAR_ONE] = 1.0
    cdf[f == 0] = 0.0
    return float(np.clip(np.dot(f, cdf), 0.0, 1.0))


@dataclass(frozen=True)
class LRUStats:
    accesses: int
    hits: int
    distinct: int
    capacity: int

    @property
    def hit_rate(self) -> float:
        return self.hits / self.accesses if self.accesses else 0.0

    @property
    def steady_state_hit_rate(self) -> float:
        """Hit rate with the first ``S`` cold misses (cache fill) discounted."""
        warm = min(self.capacity, self.distinct)
        denom = self.accesses - warm
        return self.hits / denom if denom > 0 else 1.0


@numba.njit(cache=True, nogil=True)
def _lru_kernel(trace, universe, S):
    prev = np.full(universe, -1, dtype=np.int64)
    nxt = np.full(universe, -1, dtype=np.int64)
    resident = np.zeros(universe, dtype=np.bool_)
    seen = np.zeros(universe, dtype=np.bool_)
    head = -1  # most recently used
    tail = -1  # least recently used
    size = 0
    hits = 0
    distinct = 0
    for k in range(trace.shape[0]):
        x = trace[k]
        if resident[x]:
            hits += 1
            if x != head:
                # unlink
                p = prev[x]
                n = nxt[x]
                nxt[p] = n
                if n >= 0:
                    prev[n] = p
                else:
                    tail = p
                prev[x] = -1
                nxt[x] = head
                prev[head] = x
                head = x
            continue
        if not seen[x]:
            seen[x] = True
            distinct += 1
        if size == S:
            victim = tail
            tail = prev[victim]
            if tail >= 0:
                nxt[tail] = -1
            else:
                head = -1
            resident[victim] = False
            prev[victim] = -1
            size -= 1
        resident[x] = True
        prev[x] = -1
        nxt[x] = head
        if head >= 0:
            prev[head] = x
        else:
            tail = x
        head = x
        size += 1
    return hits, distinct


def simulate_lru_stats(trace, S: int) -> LRUStats:
    if S < 1:
        raise InvalidGeometryError("cache must have at least one line")
    trace = np.asarray(trace)
    if trace.size == 0:
        return LRUStats(0, 0, 0, S)
    if trace.min() < 0:
        raise ValueError("line ids must be non-negative")
    top = int(trace.max())
    if top < max(4 * trace.size, 1 << 20):
        dense = trace.astype(np.int64, copy=False)
        universe = top + 1
    else:
        uniq, dense = np.unique(trace, return_inverse=True)
        dense = dense.astype(np.int64)
        universe = uniq.size
    hits, distinct = _lru_kernel(dense, universe, S)
    return LRUStats(int(trace.size), int(hits), int(distinct), S)


def simulate_lru(trace, S: int) -> float:
    """Exact LRU hit rate; every first touch is a miss. Empty trace gives 0."""
    return simulate_lru_stats(trace, S).hit_rate


def trace_from_column(fact, geometry: CacheGeometry) -> np.ndarray:
    fact = as_column(fact)
    return (fact.astype(np.int64) - 1) // geometry.elements_per_line


@dataclass(frozen=True)
class ModelCheck:
    z: float
    cardinality: int
    lines: int
    layout: str
    estimated: float
    simulated: float
    raw_simulated: float

    @property
    def abs_error(self) -> float:
        return abs(self.estimated - self.simulated)


def check_model(
    z: float,
    cardinality: int,
    S: int,
    layout: Union[Layout, str],
    trace_length: int = 10**7,
    seed: int = 0,
    geometry: Optional[CacheGeometry] = None,
) -> ModelCheck:
    """Compare the estimate against an LRU run over a generated Zipf trace.

    Both sides see the same rank-to-identifier mapping for ``seed``.
    """
    layout = Layout(layout)
    geometry = geometry or CacheGeometry(S)
    if geometry.lines != S:
        geometry = CacheGeometry(S, geometry.line_bytes, geometry.element_bytes)
    spec = ZipfSpec(cardinality, trace_length, z, seed)
    p = zipf_frequencies(spec)
    estimated = estimate_hit_rate(line_frequencies(p, layout, geometry, seed), S)
    fact, _ = generate_fact_column(spec, layout)
    stats = simulate_lru_stats(trace_from_column(fact, geometry), S)
    return ModelCheck(
        z, cardinality, S, layout.value, estimated, stats.steady_state_hit_rate, stats.hit_rate
    )
