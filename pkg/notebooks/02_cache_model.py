# %% [markdown]
# # Estimating LRU hit rates from access frequencies
#
# Values are packed 16 per 64-byte line. The estimator turns per-line access
# frequencies into a hit rate for an `S`-line LRU cache; an exact simulator
# runs over a sampled trace to check it.

# %%
from skewidx import Layout, ZipfSpec, zipf_frequencies
from skewidx.cachemodel import CacheGeometry, check_model, estimate_hit_rate, line_frequencies

S = 512
geom = CacheGeometry(S)
p = zipf_frequencies(ZipfSpec(2**16, 1, 1.0, 0))
for layout in (Layout.FREQ, Layout.RAND):
    f = line_frequencies(p, layout, geom, seed=0)
    print(f"{layout.value:>4}: estimated hit rate {estimate_hit_rate(f, S):.3f}")

# %% [markdown]
# Frequency ordering packs hot values into the same lines, so fewer lines
# carry most of the traffic. Compare estimate and simulation on a short trace.

# %%
for z in (0.5, 1.0, 1.5):
    for layout in ("freq", "rand"):
        r = check_model(z, 2**16, S, layout, trace_length=10**6)
        print(f"z={z} {layout:>4}  est={r.estimated:.3f}  sim={r.simulated:.3f}  err={r.abs_error:.3f}")
