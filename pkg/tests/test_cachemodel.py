import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewidx.cachemodel import (
    CacheGeometry,
    LRUStats,
    estimate_hit_rate,
    line_frequencies,
    simulate_lru,
    simulate_lru_stats,
    threshold_trials,
    trace_from_column,
)
from skewidx.columns import random_bijection
from skewidx.errors import InvalidGeometryError


# -- independent oracles -----------------------------------------------------

def naive_threshold(f, i, S, limit=10**6):
    """Linear scan for the smallest K with d(K) >= S, summing every j explicitly."""
    fi = f[i]
    for K in range(S, limit):
        d = K - sum(max(0.0, K * f[j] / (1 - fi) - 1) for j in range(len(f)) if j != i)
        if d >= S - 1e-9:
            return K
    return None


def naive_estimate(f, S):
    if sum(1 for x in f if x > 0) <= S:
        return 1.0
    total = 0.0
    for i, fi in enumerate(f):
        if fi == 0:
            continue
        K = naive_threshold(f, i, S)
        total += fi * (1 - (1 - fi) ** K)
    return total


def stack_lru(trace, S):
    """Textbook LRU stack: hit iff the line sits in the top S entries."""
    stack, hits = [], 0
    for x in trace:
        if x in stack:
            pos = stack.index(x)
            if pos < S:
                hits += 1
            stack.pop(pos)
        stack.insert(0, x)
    return hits / len(trace) if trace else 0.0


# -- line frequencies --------------------------------------------------------

def test_line_frequencies_pairs():
    got = line_frequencies([0.4, 0.3, 0.2, 0.1], "freq", CacheGeometry(1, line_bytes=8, element_bytes=4))
    np.testing.assert_allclose(got, [0.7, 0.3], atol=1e-15)


def test_line_frequencies_one_element_per_line():
    p = np.array([0.5, 0.25, 0.125, 0.125])
    geom = CacheGeometry(1, line_bytes=4, element_bytes=4)
    np.testing.assert_array_equal(line_frequencies(p, "freq", geom), p)
    np.testing.assert_array_equal(np.sort(line_frequencies(p, "rand", geom, seed=3)), np.sort(p))


def test_line_frequencies_rand_uses_generation_bijection():
    p = np.arange(32, 0, -1, dtype=float)
    p /= p.sum()
    geom = CacheGeometry(1, line_bytes=16, element_bytes=4)
    placed = np.empty(32)
    placed[random_bijection(32, 5) - 1] = p
    np.testing.assert_allclose(line_frequencies(p, "rand", geom, seed=5), placed.reshape(8, 4).sum(1))


@pytest.mark.parametrize("layout", ["freq", "rand"])
def test_uniform_values_give_uniform_lines(layout):
    lines = line_frequencies(np.full(64, 1 / 64), layout, CacheGeometry(4), seed=1)
    np.testing.assert_allclose(lines, np.full(4, 0.25))


def test_line_frequencies_pads_partial_line():
    lines = line_frequencies([0.5, 0.3, 0.2], "freq", CacheGeometry(1, 8, 4))
    np.testing.assert_allclose(lines, [0.8, 0.2])


def test_line_frequencies_empty():
    with pytest.raises(ValueError):
        line_frequencies([], "freq", CacheGeometry(1))


def test_geometry_validation():
    assert CacheGeometry(8).elements_per_line == 16
    with pytest.raises(InvalidGeometryError):
        CacheGeometry(0)
    with pytest.raises(InvalidGeometryError):
        CacheGeometry(4, line_bytes=64, element_bytes=5)


# -- estimator ---------------------------------------------------------------

def test_single_line_always_hits():
    assert estimate_hit_rate([1.0], 1) == 1.0
    assert estimate_hit_rate([1.0], 64) == 1.0


def test_everything_fits():
    assert estimate_hit_rate([0.25] * 4, 4) == 1.0
    assert estimate_hit_rate([0.5, 0.5, 0, 0], 2) == 1.0


def test_zero_capacity_rejected():
    with pytest.raises(InvalidGeometryError):
        estimate_hit_rate([0.5, 0.5], 0)


def test_unnormalized_rejected():
    with pytest.raises(ValueError):
        estimate_hit_rate([0.5, 0.4], 1)


@pytest.mark.parametrize("a", [0.5, 0.6, 0.8, 0.95])
def test_two_lines_one_slot_closed_form(a):
    # with S=1 the other line is always the single intervening line: K=1, hit = a^2 + (1-a)^2
    assert estimate_hit_rate([a, 1 - a], 1) == pytest.approx(a * a + (1 - a) ** 2, abs=1e-12)


def test_skew_helps_on_two_lines():
    rates = [estimate_hit_rate([a, 1 - a], 1) for a in (0.5, 0.6, 0.7, 0.9, 0.99)]
    assert rates == sorted(rates)


@pytest.mark.parametrize(
    "f,S",
    [
        ([0.4, 0.3, 0.2, 0.1], 2),
        ([0.25] * 4, 2),
        ([0.5, 0.2, 0.1, 0.1, 0.05, 0.05], 3),
        (list(np.full(20, 0.05)), 7),
    ],
)
def test_matches_naive_oracle(f, S):
    assert estimate_hit_rate(f, S) == pytest.approx(naive_estimate(f, S), abs=1e-12)


@given(st.lists(st.floats(0.05, 1.0), min_size=2, max_size=25), st.integers(1, 6))
@settings(max_examples=60, deadline=None)
def test_thresholds_match_naive_scan(weights, S):
    f = np.array(weights) / sum(weights)
    # S + 1 lines or fewer: d(K) only approaches S, K is the search limit
    if f.size <= S + 1:
        return
    K = threshold_trials(f, S)
    for i in range(f.size):
        assert K[i] == naive_threshold(list(f), i, S)
    assert estimate_hit_rate(f, S) == pytest.approx(naive_estimate(list(f), S), abs=1e-9)


@given(st.lists(st.floats(0.001, 1.0), min_size=3, max_size=60), st.integers(1, 40))
@settings(max_examples=60, deadline=None)
def test_monotone_in_capacity(weights, S):
    f = np.array(weights) / sum(weights)
    assert estimate_hit_rate(f, S) <= estimate_hit_rate(f, S + 1) + 1e-12


def test_uniform_estimate_near_capacity_ratio():
    lines = 4096
    est = estimate_hit_rate(np.full(lines, 1 / lines), 512)
    assert est == pytest.approx(1 - (1 - 1 / lines) ** 512, abs=1e-12)


def test_unreachable_threshold_uses_limit():
    # nnz = S + 1: other lines number exactly S, d only reaches S asymptotically
    f = np.array([0.5, 0.25, 0.25])
    K = threshold_trials(f, 2)
    assert np.all(K >= 2)
    assert 0 < estimate_hit_rate(f, 2) <= 1.0


# -- simulator ---------------------------------------------------------------

@pytest.mark.parametrize(
    "trace,S,expected",
    [([1, 1, 1, 1], 1, 0.75), ([1, 2, 1, 2], 1, 0.0), ([1, 2, 1, 2], 2, 0.5), ([], 3, 0.0)],
)
def test_simulator_examples(trace, S, expected):
    assert simulate_lru(trace, S) == expected


@given(st.lists(st.integers(0, 30), max_size=300), st.integers(1, 12))
@settings(max_examples=100, deadline=None)
def test_simulator_matches_stack_oracle(trace, S):
    assert simulate_lru(trace, S) == pytest.approx(stack_lru(trace, S), abs=0)


@given(st.lists(st.integers(0, 50), min_size=1, max_size=300))
@settings(max_examples=50, deadline=None)
def test_only_cold_misses_when_everything_fits(trace):
    distinct = len(set(trace))
    stats = simulate_lru_stats(trace, distinct)
    assert stats.hits == len(trace) - distinct
    assert stats.steady_state_hit_rate == 1.0


def test_sparse_line_ids_are_remapped():
    trace = np.array([10**12, 5, 10**12, 5, 7], dtype=np.int64)
    assert simulate_lru(trace, 2) == stack_lru(trace.tolist(), 2)


def test_steady_state_discounts_fill_misses():
    stats = LRUStats(accesses=100, hits=40, distinct=30, capacity=10)
    assert stats.hit_rate == 0.4
    assert stats.steady_state_hit_rate == pytest.approx(40 / 90)


def test_simulator_rejects_zero_capacity():
    with pytest.raises(InvalidGeometryError):
        simulate_lru([1], 0)


@pytest.mark.parametrize(
    "ids,E,lines",
    [([1, 16, 17], 16, [0, 0, 1]), ([1, 2, 3], 1, [0, 1, 2]), ([33], 16, [2])],
)
def test_trace_from_column(ids, E, lines):
    geom = CacheGeometry(1, line_bytes=E * 4, element_bytes=4)
    assert trace_from_column(ids, geom).tolist() == lines


def test_model_tracks_simulator_on_iid_trace():
    rng = np.random.default_rng(2)
    f = 1.0 / np.arange(1, 301)
    f /= f.sum()
    trace = rng.choice(300, size=200000, p=f)
    sim = simulate_lru_stats(trace, 32).steady_state_hit_rate
    assert abs(estimate_hit_rate(f, 32) - sim) < 0.05
