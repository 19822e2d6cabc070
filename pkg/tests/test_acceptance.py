"""Acceptance checks. Each test prints one verdict line through ``report``."""

import csv
import io
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from skewidx import benchcli, cachemodel, operators, parallel
from skewidx.columns import Layout, ZipfSpec, generate_fact_column, zipf_frequencies
from skewidx.permindex import permute_dimension, rebuild, recode_fact, unpermute_dimension

GRID_Z = (0.0, 0.5, 1.0, 1.5, 2.0)
GRID_D = (2**16, 2**20)
GRID_S = (2**9, 2**13)
GRID_LAYOUTS = (Layout.FREQ, Layout.RAND)


@pytest.fixture(scope="module")
def model_grid():
    t0 = time.perf_counter()
    rows = benchcli.run_model_check(GRID_Z, GRID_D, GRID_S, GRID_LAYOUTS, trace_length=10**7)
    return rows, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion1_model_accuracy(model_grid, report):
    rows, elapsed = model_grid
    worst = max(rows, key=lambda r: r.abs_error)
    ok = worst.abs_error <= 0.05 and elapsed < 300
    report(1, ok, f"max |est-sim| = {worst.abs_error:.4f} at z={worst.z} D={worst.cardinality} "
                  f"S={worst.lines} {worst.layout}; {len(rows)} points in {elapsed:.0f}s (limits 0.05, 300s)")
    assert len(rows) == 40
    assert worst.abs_error <= 0.05
    assert elapsed < 300


def test_criterion2_top_line_mass(report):
    D, E, top = 2**20, 16, 8192
    p = zipf_frequencies(ZipfSpec(D, 1, 1.0, 0))
    geom = cachemodel.CacheGeometry(top, 64, 64 // E)
    mass = {}
    for layout in (Layout.FREQ, Layout.RAND):
        lines = cachemodel.line_frequencies(p, layout, geom, seed=0)
        mass[layout] = float(np.sort(lines)[::-1][:top].sum())
    ratio = mass[Layout.FREQ] / mass[Layout.RAND]
    report(2, ratio >= 1.5, f"top-{top} line mass freq={mass[Layout.FREQ]:.4f} "
                            f"rand={mass[Layout.RAND]:.4f} ratio={ratio:.3f} (need >= 1.5)")
    assert ratio >= 1.5


def _brute_top_k(fact, D, k):
    counts = {}
    for v in fact.tolist():
        counts[v] = counts.get(v, 0) + 1
    pairs = sorted(((-c, i) for i, c in counts.items()))
    # identifiers with zero count still rank, after all counted ones
    missing = [(0, i) for i in range(1, D + 1) if i not in counts]
    pairs = (pairs + missing)[:k]
    return [i for _, i in pairs], [-c for c, _ in pairs]


def _one_case(rng):
    D = int(rng.integers(1, 10**4 + 1))
    N = int(rng.integers(0, 10**5 + 1))
    z = float(rng.choice([0.0, 0.5, 1.0, 1.5, 2.0]))
    fact, _ = generate_fact_column(ZipfSpec(D, N, z, int(rng.integers(2**31))), Layout.RAND)
    dim = rng.integers(0, 2**31, size=D).astype(np.int64)
    index = rebuild(fact, D)
    rfact = recode_fact(fact, index)
    rdim = permute_dimension(dim, index)
    bitmap = operators.Bitmap.from_bools(rng.random(D) < rng.random())
    failures = []

    def expect(name, cond):
        if not cond:
            failures.append(name)

    plain = operators.materialize(fact, dim)
    expect("materialize perm", np.array_equal(plain, operators.materialize(rfact, rdim)))
    t = int(rng.integers(1, D + 1))
    expect("split", np.array_equal(plain, operators.materialize_split(rfact, rdim, t)))
    expect("select perm", np.array_equal(operators.select(fact, bitmap),
                                         operators.select(rfact, bitmap.permuted(index))))
    counts = operators.aggregate_count(fact, D)
    rcounts = operators.aggregate_count(rfact, D)
    expect("aggregate perm", np.array_equal(counts, unpermute_dimension(rcounts, index)))
    payload = rng.integers(-1000, 1000, size=N)
    expect("sum perm", np.array_equal(operators.aggregate_sum(fact, payload, D),
                                      unpermute_dimension(operators.aggregate_sum(rfact, payload, D), index)))
    hot = int(rng.integers(1, D + 1))
    lanes = int(rng.integers(1, 33))
    expect("lanecopy", np.array_equal(rcounts, operators.aggregate_count_lanecopy(rfact, D, hot, lanes)))
    for T in (1, 2, 4, 8):
        for strategy in parallel.AggStrategy:
            h = int(rng.integers(1, D + 1))
            got = parallel.parallel_aggregate(rfact, D, parallel.ParallelPlan(T, strategy, h))
            expect(f"{strategy.value} T={T}", np.array_equal(rcounts, got))
        plan = parallel.ParallelPlan(T)
        expect(f"par materialize T={T}", np.array_equal(operators.materialize(rfact, rdim),
                                                       parallel.parallel_materialize(rfact, rdim, plan)))
        expect(f"par select T={T}", np.array_equal(operators.select(fact, bitmap),
                                                  parallel.parallel_select(fact, bitmap, plan)))
    k = int(rng.integers(1, D + 1))
    hh = operators.heavy_hitter_count(rfact, k, D)
    ids, cnts = _brute_top_k(rfact, D, k)
    expect("heavy hitters", hh.identifiers.tolist() == ids and hh.counts.tolist() == cnts)
    return failures


@pytest.mark.slow
def test_criterion3_correctness_gates(report):
    rng = np.random.default_rng(20240603)
    bad = []
    for case in range(200):
        failures = _one_case(rng)
        if failures:
            bad.append((case, failures))
    report(3, not bad, f"200 random cases, {len(bad)} with mismatches (exact equality)")
    assert not bad, bad[:5]


@pytest.mark.slow
def test_criterion4_freq_beats_rand(model_grid, report):
    rows, _ = model_grid
    sim = {(r.z, r.layout): r.simulated for r in rows if r.cardinality == 2**20 and r.lines == 2**9}
    margins = {z: sim[(z, "freq")] - sim[(z, "rand")] for z in (0.5, 1.0, 1.5)}
    ok = all(m > 0 for m in margins.values())
    report(4, ok, "freq-rand simulated hit rate margins: "
                  + ", ".join(f"z={z}: {m:+.4f}" for z, m in margins.items()))
    assert ok


def _llc_bytes():
    best = 0
    for idx in Path("/sys/devices/system/cpu/cpu0/cache").glob("index*"):
        try:
            level = int((idx / "level").read_text())
            size = (idx / "size").read_text().strip()
        except (OSError, ValueError):
            continue
        mult = {"K": 1024, "M": 1024**2, "G": 1024**3}.get(size[-1:], 1)
        num = int(size[:-1]) if size[-1:].isalpha() else int(size)
        if level >= 2:
            best = max(best, num * mult)
    return best


def _materialize_ratio(D):
    cfg = benchcli.BenchConfig(query=benchcli.Query.MATERIALIZE, D=D, N=10**7, z=1.0, repetitions=5)
    return benchcli.layout_speedup(benchcli.run_bench(cfg))


@pytest.mark.slow
def test_criterion5_materialize_speedup(report):
    ratio = _materialize_ratio(10**6)
    llc = _llc_bytes()
    note = f"D=1e6 rand/freq = {ratio:.3f}"
    if ratio < 1.1 and llc > 4 * 10**6:
        warnings.warn(f"LLC {llc >> 20} MB holds the 4 MB dimension; rerunning at D=1e7")
        ratio = _materialize_ratio(10**7)
        note += f" (LLC {llc >> 20} MB > footprint); D=1e7 rand/freq = {ratio:.3f}"
    report(5, ratio >= 1.1, note + " (need >= 1.1)")
    assert ratio >= 1.1


@pytest.mark.slow
def test_criterion6_heavy_hitters(report):
    D, N, k = 10**6, 10**7, 4000
    fact, _ = generate_fact_column(ZipfSpec(D, N, 0.5, 0), Layout.RAND)
    rfact = recode_fact(fact, rebuild(fact, D))
    hh, t_hh = benchcli.time_repeated(lambda: operators.heavy_hitter_count(rfact, k, D, check=False), 5)
    full, t_full = benchcli.time_repeated(lambda: operators.aggregate_count(rfact, D, check=False), 5)
    ids, counts = operators.top_k_from_counts(full, k)
    brute = np.bincount(rfact, minlength=D + 1)[1:]
    bids, bcounts = operators.top_k_from_counts(brute, k)
    exact = (np.array_equal(hh.identifiers, bids) and np.array_equal(hh.counts, bcounts)
             and np.array_equal(ids, bids))
    speedup = np.median(t_full) / np.median(t_hh)
    ok = hh.accumulator_entries == k and speedup >= 2 and exact
    report(6, ok, f"accumulator entries={hh.accumulator_entries}, throughput x{speedup:.2f} "
                  f"vs full aggregation (need >= 2), exact={exact}")
    assert hh.accumulator_entries == k
    assert exact
    assert speedup >= 2


def test_criterion7_hybrid(report):
    D, N = 10**5, 10**6
    fact, _ = generate_fact_column(ZipfSpec(D, N, 2.0, 3), Layout.RAND)
    rfact = recode_fact(fact, rebuild(fact, D))
    run = parallel.run_parallel_aggregate(rfact, D, parallel.ParallelPlan(8, "hybrid", 8192))
    exact = np.array_equal(run.counts, operators.aggregate_count(rfact, D))
    mem = {
        T: (parallel.memory_footprint(parallel.ParallelPlan(T, "hybrid", 8192), 10**6),
            parallel.memory_footprint(parallel.ParallelPlan(T, "independent"), 10**6))
        for T in (2, 4, 8, 16, 64)
    }
    smaller = all(h < i for h, i in mem.values())
    report(7, exact and smaller, f"hybrid T=8 z=2 exact={exact}; hybrid/independent bytes at D=1e6: "
                                 + ", ".join(f"T={T}: {h}/{i}" for T, (h, i) in mem.items()))
    assert exact and smaller


def test_criterion8_csv_reporting(tmp_path, report):
    out = tmp_path / "bench.csv"
    code = benchcli.main(["bench", "--D", "2000", "--N", "20000", "--repetitions", "1",
                          "--out", str(out)])
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    ok = code == 0 and {r["layout"] for r in rows} == {"rand", "freq"} and all(
        int(r["median_ns"]) > 0 and float(r["tuples_per_s"]) > 0 for r in rows)
    report(8, ok, "absolute latencies not reproducible by design; CSV carries per-layout timings for ratios")
    assert ok
