"""Skew-aware columnar operators built on frequency-ranked permutation indexes."""

from .cachemodel import (
    CacheGeometry,
    estimate_hit_rate,
    line_frequencies,
    simulate_lru,
    simulate_lru_stats,
    trace_from_column,
)
from .columns import (
    Layout,
    ZipfSpec,
    generate_fact_column,
    read_column,
    write_column,
    zipf_frequencies,
)
from .operators import (
    Bitmap,
    aggregate_count,
    aggregate_count_lanecopy,
    aggregate_sum,
    build_bitmap,
    heavy_hitter_count,
    materialize,
    materialize_split,
    select,
)
from .parallel import (
    AggStrategy,
    ParallelPlan,
    memory_footprint,
    parallel_aggregate,
    parallel_materialize,
    parallel_select,
)
from .permindex import (
    FrequencyProfile,
    PermutationIndex,
    append_dimension_row,
    build_index,
    count_frequencies,
    permute_dimension,
    rebuild,
    recode_fact,
)

__version__ = "0.1.0"
