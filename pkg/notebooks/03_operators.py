# %% [markdown]
# # Single-threaded operators on a recoded column
#
# Materialization, bitmap selection, grouped counting and the heavy-hitter
# shortcut. Each recoded result is checked against the original layout.

# %%
import time

import numpy as np

from skewidx import Layout, ZipfSpec, generate_fact_column, operators
from skewidx.permindex import permute_dimension, rebuild, recode_fact, unpermute_dimension

D, N = 10**5, 2 * 10**6
fact, _ = generate_fact_column(ZipfSpec(D, N, 1.0, 1), Layout.RAND)
index = rebuild(fact, D)
rfact = recode_fact(fact, index)
dim = np.random.default_rng(0).integers(0, 1000, D)
rdim = permute_dimension(dim, index)

# %% Materialization, plain and split at a cache-sized threshold
t = operators.split_threshold_for_cache(256 * 1024, rdim.itemsize, D)
out, deferred = operators.materialize_split(rfact, rdim, t, return_deferred=True)
assert np.array_equal(out, operators.materialize(fact, dim))
print(f"split threshold {t}: {deferred / N:.1%} of rows deferred to the second pass")

# %% Selection through a bitmap
bitmap = operators.build_bitmap(dim, lambda v: v < 100)
rows = operators.select(rfact, bitmap.permuted(index))
assert np.array_equal(rows, operators.select(fact, bitmap))
print("selected rows:", rows.size)

# %% Grouped counting and lane copies for the hottest groups
counts = operators.aggregate_count(rfact, D)
assert np.array_equal(unpermute_dimension(counts, index), operators.aggregate_count(fact, D))
assert np.array_equal(counts, operators.aggregate_count_lanecopy(rfact, D, hot=40, lanes=16))

# %% Heavy hitters only need identifiers 1..k
def clock(fn, reps=5):
    fn()
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps

hh = operators.heavy_hitter_count(rfact, 100, D)
print("top-3:", hh.items()[:3], "accumulator entries:", hh.accumulator_entries)
full = clock(lambda: operators.aggregate_count(rfact, D, check=False))
top = clock(lambda: operators.heavy_hitter_count(rfact, 100, D, check=False))
print(f"full aggregation {full * 1e3:.1f} ms, top-100 {top * 1e3:.1f} ms")
assert operators.verify_heavy_hitters(rfact, 100, D)
