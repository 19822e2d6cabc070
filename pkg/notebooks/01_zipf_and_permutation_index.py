# %% [markdown]
# # Skewed columns and the permutation index
#
# A fact column references dimension rows by 1-based identifier. With Zipf
# skew a few identifiers dominate. The permutation index renames identifiers
# by descending frequency so the popular ones sit at low addresses.

# %%
import numpy as np

from skewidx import Layout, ZipfSpec, generate_fact_column, zipf_frequencies
from skewidx.permindex import decode_fact, permute_dimension, rebuild, recode_fact

spec = ZipfSpec(domain_cardinality=1000, tuple_count=200_000, z=1.0, seed=42)
p = zipf_frequencies(spec)
print("share of the 10 most popular values:", p[:10].sum().round(3))

# %% [markdown]
# Under the `rand` layout the popular values are scattered over the domain.

# %%
fact, counts = generate_fact_column(spec, Layout.RAND)
hottest = np.argsort(-counts)[:5] + 1
print("five hottest identifiers (rand):", hottest)

# %% [markdown]
# Build the index, recode the column and permute a dimension attribute. After
# recoding identifier 1 is the most frequent one.

# %%
index = rebuild(fact, spec.domain_cardinality)
recoded = recode_fact(fact, index)
print("rank of", hottest[0], "->", index.rank_of(int(hottest[0])))
print("counts of recoded ids 1..5:", np.bincount(recoded)[1:6])

dim = np.arange(1, spec.domain_cardinality + 1) * 10
pdim = permute_dimension(dim, index)
# the join result is unchanged by the renaming
assert np.array_equal(dim[fact - 1], pdim[recoded - 1])
assert np.array_equal(decode_fact(recoded, index), fact)
print("recoding preserves every join result")
