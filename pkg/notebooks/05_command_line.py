# %% [markdown]
# # Command-line workflow
#
# The `skewidx` command writes column files, builds and applies indexes and
# produces benchmark CSV rows. Here it is driven in-process through `main`.

# %%
import csv
import tempfile
from pathlib import Path

from skewidx.benchcli import main

work = Path(tempfile.mkdtemp())
assert main(["generate", "--D", "5e4", "--N", "1e6", "--z", "1", "--out", str(work / "data")]) == 0
print(sorted(p.name for p in (work / "data").iterdir()))

# %% Build an index from the column and recode it
fact = work / "data" / "fact.skdx"
assert main(["index", "build", "--fact", str(fact), "--D", "5e4", "--out", str(work / "ix.skpi")]) == 0
assert main(["index", "apply", "--index", str(work / "ix.skpi"), "--fact", str(fact),
             "--out", str(work / "recoded.skdx")]) == 0

# %% Benchmark materialization under both layouts
out = work / "bench.csv"
assert main(["bench", "--fact", str(fact), "--D", "5e4", "--repetitions", "3",
             "--cache-lines", "512", "--out", str(out)]) == 0
for row in csv.DictReader(out.open()):
    print(row["layout"], row["median_ns"], row["est_hit_rate"], row["sim_hit_rate"])

# %% Model check on a small grid; exit code 3 would flag an error above tolerance
code = main(["model-check", "--z", "1", "--D", "65536", "--S", "512",
             "--trace-length", "1e6", "--out", str(work / "model.csv")])
print("model-check exit code:", code)
print((work / "model.csv").read_text())
