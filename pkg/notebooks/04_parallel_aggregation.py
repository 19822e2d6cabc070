# %% [markdown]
# # Parallel aggregation strategies
#
# `independent` gives each thread a full accumulator, `shared_atomic` uses one
# array with atomic increments, and `hybrid` keeps the hottest `h` groups
# private while cold groups go to the shared array.

# %%
import numpy as np

from skewidx import Layout, ZipfSpec, generate_fact_column, operators, parallel
from skewidx.permindex import rebuild, recode_fact

D, N = 10**6, 4 * 10**6
fact, _ = generate_fact_column(ZipfSpec(D, N, 1.5, 5), Layout.RAND)
rfact = recode_fact(fact, rebuild(fact, D))
expected = operators.aggregate_count(rfact, D)

for strategy in parallel.AggStrategy:
    plan = parallel.ParallelPlan(threads=4, strategy=strategy, hot_threshold=8192)
    run = parallel.run_parallel_aggregate(rfact, D, plan)
    assert np.array_equal(run.counts, expected)
    print(f"{strategy.value:>13}: {run.elapsed_ns / 1e6:7.1f} ms  "
          f"{run.accumulator_bytes / 2**20:6.1f} MiB  shared updates {run.shared_fraction:.1%}")

# %% [markdown]
# Thread-count scaling depends on the host; on a single core every strategy
# runs its spans one after another and only the memory column is meaningful.

# %%
for T in (2, 8, 32):
    mem = {s.value: parallel.memory_footprint(parallel.ParallelPlan(T, s), D) >> 20
           for s in parallel.AggStrategy}
    print(T, "threads, MiB:", mem)
