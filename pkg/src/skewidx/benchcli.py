"""Command-line driver: data generation, ingestion, indexing and benchmarks.

Exit codes: 0 ok, 1 usage, 2 data error, 3 correctness-gate failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import cachemodel, operators, parallel
from .columns import Layout, ZipfSpec, generate_fact_column, read_column, write_column
from .errors import CorrectnessGateError, SkewIndexError
from .ingest import read_keyed_csv, read_snap_edges
from .permindex import (
    PermutationIndex,
    permute_dimension,
    read_index,
    rebuild,
    recode_fact,
    unpermute_dimension,
    write_index,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_GATE = 0, 1, 2, 3

# grid points beyond these need --large
DESK_MAX_D = 2**25
DESK_MAX_N = 2**28

MODEL_TOLERANCE = 0.05

CSV_COLUMNS = [
    "query", "layout", "D", "N", "z", "threads", "strategy", "hot_threshold",
    "split_threshold", "top_k", "selectivity", "median_ns", "min_ns",
    "tuples_per_s", "checksum", "est_hit_rate", "sim_hit_rate",
]
MODEL_COLUMNS = ["z", "D", "S", "layout", "estimated_hit_rate", "simulated_hit_rate", "abs_error"]


class Query(str, Enum):
    MATERIALIZE = "materialize"
    SELECT = "select"
    AGGREGATE = "aggregate"
    TOP_K = "top_k"


class UsageError(Exception):
    pass


# -- checksums ---------------------------------------------------------------

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, elementwise on uint64 (wrapping)."""
    with np.errstate(over="ignore"):
        x = x.astype(np.uint64)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


def sequence_checksum(values: np.ndarray) -> str:
    """Order-dependent 64-bit digest of an output column."""
    arr = np.ascontiguousarray(values)
    h = hashlib.blake2b(digest_size=8)
    h.update(str(arr.dtype).encode())
    h.update(arr.data)
    return h.hexdigest()


def aggregate_checksum(identifiers: np.ndarray, counts: np.ndarray) -> str:
    """Order-independent 64-bit sum of per-(identifier, count) hashes."""
    ids = np.asarray(identifiers, dtype=np.uint64)
    cnt = np.asarray(counts, dtype=np.uint64)
    keep = cnt != 0
    with np.errstate(over="ignore"):
        h = _mix64(ids[keep] ^ _mix64(cnt[keep]))
        total = int(h.sum(dtype=np.uint64)) & 0xFFFFFFFFFFFFFFFF
    return f"{total:016x}"


# -- configuration -----------------------------------------------------------

@dataclass
class BenchConfig:
    query: Query = Query.MATERIALIZE
    layouts: List[Layout] = field(default_factory=lambda: [Layout.RAND, Layout.FREQ])
    D: int = 10**6
    N: int = 10**7
    z: float = 1.0
    seed: int = 0
    threads: int = 1
    strategy: parallel.AggStrategy = parallel.AggStrategy.INDEPENDENT
    hot_threshold: int = parallel.DEFAULT_HYBRID_HOT
    split_threshold: int = 0
    top_k: Optional[int] = None  # None: min(4000, D)
    repetitions: int = 5
    selectivity: float = 0.5
    cache_lines: int = 0
    hh_branchy: bool = False
    prefetch_distance: int = 0

    def validate(self) -> None:
        if self.top_k is None:
            self.top_k = min(operators.DEFAULT_TOP_K, self.D)
        if self.repetitions < 1:
            raise UsageError("repetitions must be >= 1")
        if not 0.0 <= self.selectivity <= 1.0:
            raise UsageError("selectivity must lie in [0, 1]")
        if self.top_k < 1 or self.top_k > self.D:
            raise UsageError(f"top-k must lie in 1..D ({self.D})")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        if self.split_threshold < 0 or self.split_threshold > self.D:
            raise UsageError("split threshold must lie in 0..D")
        if self.strategy is parallel.AggStrategy.HYBRID and not 1 <= self.hot_threshold <= self.D:
            raise UsageError("hot threshold must lie in 1..D")


@dataclass
class RunRecord:
    query: str
    layout: str
    D: int
    N: int
    z: float
    threads: int
    strategy: str
    hot_threshold: int
    split_threshold: int
    top_k: int
    selectivity: float
    median_ns: int
    min_ns: int
    tuples_per_s: float
    checksum: str
    est_hit_rate: Optional[float] = None
    sim_hit_rate: Optional[float] = None

    def row(self) -> Dict[str, object]:
        out = asdict(self)
        for key in ("est_hit_rate", "sim_hit_rate"):
            out[key] = "" if out[key] is None else f"{out[key]:.6f}"
        out["tuples_per_s"] = f"{self.tuples_per_s:.1f}"
        return out


def write_records(records: Iterable[RunRecord], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow(rec.row())


def dimension_values(cardinality: int) -> np.ndarray:
    """Synthetic dimension attribute: a fixed hash of the identifier."""
    ids = np.arange(1, cardinality + 1, dtype=np.uint64)
    return (_mix64(ids) & np.uint64(0xFFFFFFFF)).astype(np.uint32)


def selection_bitmap(cardinality: int, selectivity: float, seed: int) -> operators.Bitmap:
    """Seeded predicate passing ``round(selectivity * D)`` random dimension rows."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E1EC7]))
    chosen = np.zeros(cardinality, dtype=bool)
    chosen[rng.permutation(cardinality)[: int(round(selectivity * cardinality))]] = True
    return operators.Bitmap.from_bools(chosen)


# -- benchmark ---------------------------------------------------------------

def time_repeated(fn: Callable[[], object], repetitions: int):
    """One warm-up call, then ``repetitions`` timed calls. Returns (result, times_ns)."""
    result = fn()
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter_ns()
        result = fn()
        times.append(time.perf_counter_ns() - t0)
    return result, times


@dataclass
class _Prepared:
    layout: Layout
    fact: np.ndarray
    dim: np.ndarray
    bitmap: Optional[operators.Bitmap]


def _kernel(cfg: BenchConfig, prep: _Prepared) -> Callable[[], object]:
    plan = parallel.ParallelPlan(cfg.threads, cfg.strategy, cfg.hot_threshold)
    fact, D = prep.fact, cfg.D
    if cfg.query is Query.MATERIALIZE:
        if cfg.split_threshold and prep.layout is Layout.FREQ:
            return lambda: operators.materialize_split(fact, prep.dim, cfg.split_threshold, check=False)
        if cfg.threads > 1:
            return lambda: parallel.parallel_materialize(fact, prep.dim, plan, check=False)
        return lambda: operators.materialize(fact, prep.dim, check=False)
    if cfg.query is Query.SELECT:
        if cfg.threads > 1:
            return lambda: parallel.parallel_select(fact, prep.bitmap, plan, check=False)
        return lambda: operators.select(fact, prep.bitmap, check=False)
    if cfg.query is Query.AGGREGATE:
        if cfg.threads == 1 and cfg.strategy is parallel.AggStrategy.INDEPENDENT:
            return lambda: operators.aggregate_count(fact, D, check=False)
        return lambda: parallel.parallel_aggregate(fact, D, plan, check=False)
    # top_k: only the recoded column can use the identifier cutoff; the
    # baseline aggregates everything and sorts
    if prep.layout is Layout.FREQ:
        return lambda: operators.heavy_hitter_count(fact, cfg.top_k, D, branchy=cfg.hh_branchy, check=False)
    return lambda: operators.top_k_from_counts(operators.aggregate_count(fact, D, check=False), cfg.top_k)


def _checksum(cfg: BenchConfig, prep: _Prepared, result, index: PermutationIndex) -> str:
    if cfg.query in (Query.MATERIALIZE, Query.SELECT):
        return sequence_checksum(result)
    if cfg.query is Query.AGGREGATE:
        counts = unpermute_dimension(result, index) if prep.layout is Layout.FREQ else result
        return aggregate_checksum(np.arange(1, cfg.D + 1), counts)
    if prep.layout is Layout.FREQ:
        ids = index.offsets[result.identifiers.astype(np.intp) - 1]
        return aggregate_checksum(ids, result.counts)
    ids, counts = result
    return aggregate_checksum(ids, counts)


def _hit_rates(cfg: BenchConfig, fact: np.ndarray):
    if not cfg.cache_lines:
        return None, None
    geom = cachemodel.CacheGeometry(cfg.cache_lines)
    counts = np.bincount(fact, minlength=cfg.D + 1)[1:]
    # address-ordered frequencies: no further permutation
    lines = cachemodel.line_frequencies(counts / counts.sum(), Layout.FREQ, geom)
    est = cachemodel.estimate_hit_rate(lines, cfg.cache_lines)
    sim = cachemodel.simulate_lru_stats(cachemodel.trace_from_column(fact, geom), cfg.cache_lines)
    return est, sim.steady_state_hit_rate


def run_bench(cfg: BenchConfig, fact: Optional[np.ndarray] = None, dim: Optional[np.ndarray] = None) -> List[RunRecord]:
    """Benchmark one query over the requested layouts.

    ``fact`` is the baseline (randomized-identifier) column; the ``freq``
    layout is derived by building a permutation index over it, recoding
    the column and permuting the dimension. Results of all layouts are
    checked against each other; a mismatch raises
    :class:`CorrectnessGateError`.
    """
    cfg.validate()
    if fact is None:
        fact, _ = generate_fact_column(ZipfSpec(cfg.D, cfg.N, cfg.z, cfg.seed), Layout.RAND)
    cfg.N = int(fact.size)
    if dim is None:
        dim = dimension_values(cfg.D)
    index = rebuild(fact, cfg.D)
    bitmap = selection_bitmap(cfg.D, cfg.selectivity, cfg.seed) if cfg.query is Query.SELECT else None
    if cfg.prefetch_distance:
        log.info("prefetch distance %d is a hint; these kernels do not prefetch", cfg.prefetch_distance)

    records: List[RunRecord] = []
    for layout in cfg.layouts:
        if layout is Layout.FREQ:
            prep = _Prepared(layout, recode_fact(fact, index), permute_dimension(dim, index),
                             bitmap.permuted(index) if bitmap else None)
        else:
            prep = _Prepared(layout, fact, dim, bitmap)
        result, times = time_repeated(_kernel(cfg, prep), cfg.repetitions)
        median = int(np.median(times))
        est, sim = _hit_rates(cfg, prep.fact)
        records.append(RunRecord(
            cfg.query.value, layout.value, cfg.D, cfg.N, cfg.z, cfg.threads,
            cfg.strategy.value, cfg.hot_threshold, cfg.split_threshold, cfg.top_k,
            cfg.selectivity, median, int(min(times)),
            cfg.N / (median / 1e9) if median else float("inf"),
            _checksum(cfg, prep, result, index), est, sim,
        ))
    if len({r.checksum for r in records}) > 1:
        raise CorrectnessGateError(
            "checksum differs across layouts: "
            + ", ".join(f"{r.layout}={r.checksum}" for r in records)
        )
    return records


def layout_speedup(records: Sequence[RunRecord]) -> Optional[float]:
    """rand median time / freq median time, when both layouts are present."""
    by = {r.layout: r for r in records}
    if "rand" in by and "freq" in by and by["freq"].median_ns:
        return by["rand"].median_ns / by["freq"].median_ns
    return None


# -- model check -------------------------------------------------------------

def run_model_check(
    zs: Sequence[float],
    Ds: Sequence[int],
    Ss: Sequence[int],
    layouts: Sequence[Layout],
    trace_length: int = 10**7,
    seed: int = 0,
) -> List[cachemodel.ModelCheck]:
    return [
        cachemodel.check_model(z, D, S, layout, trace_length, seed)
        for z in zs for D in Ds for S in Ss for layout in layouts
    ]


def write_model_rows(rows: Iterable[cachemodel.ModelCheck], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(MODEL_COLUMNS)
    for r in rows:
        writer.writerow([r.z, r.cardinality, r.lines, r.layout,
                         f"{r.estimated:.6f}", f"{r.simulated:.6f}", f"{r.abs_error:.6f}"])


# -- file-producing commands -------------------------------------------------

def _write_meta(out: Path, **meta) -> None:
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def cmd_generate(spec: ZipfSpec, layout: Layout, out: Path, large: bool = False) -> Dict[str, Path]:
    """Write fact column, ground-truth counts and (``freq``) the permutation index."""
    spec.validate()
    if not large and (spec.domain_cardinality > DESK_MAX_D or spec.tuple_count > DESK_MAX_N):
        raise UsageError("grid point exceeds desk scale; pass --large to generate it")
    out.mkdir(parents=True, exist_ok=True)
    fact, counts = generate_fact_column(spec, layout)
    files = {"fact": out / "fact.skdx", "counts": out / "counts.skdx"}
    write_column(files["fact"], fact)
    write_column(files["counts"], counts)
    if layout is Layout.FREQ:
        files["index"] = out / "index.skpi"
        write_index(files["index"], rebuild(fact, spec.domain_cardinality))
    _write_meta(out, D=spec.domain_cardinality, N=spec.tuple_count, z=spec.z,
                seed=spec.seed, layout=layout.value)
    return files


def cmd_ingest_snap(edge_list: Path, out: Path) -> Dict[str, Path]:
    graph = read_snap_edges(edge_list)
    if graph.empty:
        raise SkewIndexError(f"{edge_list}: no edges found")
    out.mkdir(parents=True, exist_ok=True)
    files = {"fact": out / "fact.skdx", "nodes": out / "nodes.csv"}
    write_column(files["fact"], graph.fact)
    with open(files["nodes"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "node"])
        w.writerows(zip(range(1, graph.cardinality + 1), graph.nodes.tolist()))
    _write_meta(out, D=graph.cardinality, N=graph.edges, source=str(edge_list))
    return files


def cmd_ingest_csv(path: Path, key_column: str, out: Path) -> Dict[str, Path]:
    keyed = read_keyed_csv(path, key_column)
    out.mkdir(parents=True, exist_ok=True)
    files = {"fact": out / "fact.skdx", "dictionary": out / "dictionary.csv"}
    write_column(files["fact"], keyed.fact)
    with open(files["dictionary"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", key_column])
        w.writerows(zip(range(1, keyed.cardinality + 1), keyed.dictionary))
    _write_meta(out, D=keyed.cardinality, N=int(keyed.fact.size), source=str(path), key=key_column)
    return files


def _cardinality(fact_path: Path, explicit: Optional[int]) -> int:
    if explicit:
        return explicit
    meta = fact_path.parent / "meta.json"
    if meta.exists():
        return int(json.loads(meta.read_text())["D"])
    raise UsageError("cannot infer D: pass --D or keep meta.json next to the fact file")


# -- argument parsing --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> List[int]:
    return [int(float(x)) for x in text.split(",") if x]


def _int(text: str) -> int:
    # accepts 1e6 style
    return int(float(text))


def _layouts(text: str) -> List[Layout]:
    if text == "both":
        return [Layout.RAND, Layout.FREQ]
    return [Layout(x) for x in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="skewidx", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="generate a Zipf fact column")
    g.add_argument("--D", type=_int, required=True)
    g.add_argument("--N", type=_int, required=True)
    g.add_argument("--z", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--layout", choices=["rand", "freq"], default="rand")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--large", action="store_true", help="allow sizes beyond the desk-scale limits")

    s = sub.add_parser("ingest-snap", help="load a SNAP edge list")
    s.add_argument("edge_list", type=Path)
    s.add_argument("--out", type=Path, required=True)

    c = sub.add_parser("ingest-csv", help="dictionary-encode a CSV key column")
    c.add_argument("path", type=Path)
    c.add_argument("--key", required=True, dest="key_column")
    c.add_argument("--out", type=Path, required=True)

    ix = sub.add_parser("index", help="build or apply a permutation index")
    ixs = ix.add_subparsers(dest="index_command", required=True, parser_class=_Parser)
    b = ixs.add_parser("build")
    b.add_argument("--fact", type=Path, required=True)
    b.add_argument("--D", type=_int)
    b.add_argument("--out", type=Path, required=True)
    a = ixs.add_parser("apply")
    a.add_argument("--index", type=Path, required=True)
    a.add_argument("--fact", type=Path, required=True)
    a.add_argument("--out", type=Path, required=True)
    a.add_argument("--dim", type=Path, help="dimension column to permute")
    a.add_argument("--dim-out", type=Path)

    be = sub.add_parser("bench", help="time a query under rand and/or freq layouts")
    be.add_argument("--query", choices=[q.value for q in Query], default="materialize")
    be.add_argument("--layout", default="both", help="rand, freq or both")
    be.add_argument("--fact", type=Path, help="baseline fact column; generated when omitted")
    be.add_argument("--dim", type=Path, help="dimension column; synthetic when omitted")
    be.add_argument("--D", type=_int, default=None)
    be.add_argument("--N", type=_int, default=10**7)
    be.add_argument("--z", type=float, default=1.0)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--threads", type=int, default=1)
    be.add_argument("--strategy", choices=[s.value for s in parallel.AggStrategy], default="independent")
    be.add_argument("--hot-threshold", type=_int, default=parallel.DEFAULT_HYBRID_HOT)
    be.add_argument("--split-threshold", type=_int, default=0, help="0 disables split materialization")
    be.add_argument("--top-k", type=_int, default=None, help="default min(4000, D)")
    be.add_argument("--repetitions", type=int, default=5)
    be.add_argument("--selectivity", type=float, default=0.5)
    be.add_argument("--cache-lines", type=_int, default=0, help="also report model/LRU hit rates")
    be.add_argument("--hh-branchy", action="store_true")
    be.add_argument("--prefetch-distance", type=int, default=0, help="hint only")
    be.add_argument("--out", type=Path, help="CSV file (default stdout)")

    m = sub.add_parser("model-check", help="compare the hit-rate model with LRU simulation")
    m.add_argument("--z", type=_floats, default=[0.0, 0.5, 1.0, 1.5, 2.0])
    m.add_argument("--D", type=_ints, default=[2**16, 2**20])
    m.add_argument("--S", type=_ints, default=[2**9, 2**13])
    m.add_argument("--layout", type=_layouts, default=[Layout.FREQ, Layout.RAND])
    m.add_argument("--trace-length", type=_int, default=10**7)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--tolerance", type=float, default=MODEL_TOLERANCE)
    m.add_argument("--out", type=Path)
    return p


def _open_out(path: Optional[Path]):
    return open(path, "w", newline="") if path else sys.stdout


def _dispatch(args) -> int:
    if args.command == "generate":
        files = cmd_generate(ZipfSpec(args.D, args.N, args.z, args.seed), Layout(args.layout), args.out, args.large)
        for name, path in files.items():
            print(f"{name}\t{path}")
        return EXIT_OK

    if args.command == "ingest-snap":
        files = cmd_ingest_snap(args.edge_list, args.out)
    elif args.command == "ingest-csv":
        files = cmd_ingest_csv(args.path, args.key_column, args.out)
    elif args.command == "index":
        if args.index_command == "build":
            D = _cardinality(args.fact, args.D)
            write_index(args.out, rebuild(read_column(args.fact), D))
            files = {"index": args.out}
        else:
            index = read_index(args.index)
            write_column(args.out, recode_fact(read_column(args.fact), index))
            files = {"fact": args.out}
            if args.dim:
                if not args.dim_out:
                    raise UsageError("--dim needs --dim-out")
                write_column(args.dim_out, permute_dimension(read_column(args.dim), index))
                files["dim"] = args.dim_out
    elif args.command == "bench":
        fact = read_column(args.fact) if args.fact else None
        D = args.D
        if D is None:
            D = _cardinality(args.fact, None) if args.fact else 10**6
        cfg = BenchConfig(
            query=Query(args.query), layouts=_layouts(args.layout), D=D, N=args.N, z=args.z,
            seed=args.seed, threads=args.threads, strategy=parallel.AggStrategy(args.strategy),
            hot_threshold=args.hot_threshold, split_threshold=args.split_threshold,
            top_k=args.top_k, repetitions=args.repetitions, selectivity=args.selectivity,
            cache_lines=args.cache_lines, hh_branchy=args.hh_branchy,
            prefetch_distance=args.prefetch_distance,
        )
        dim = read_column(args.dim) if args.dim else None
        records = run_bench(cfg, fact, dim)
        fh = _open_out(args.out)
        try:
            write_records(records, fh)
        finally:
            if fh is not sys.stdout:
                fh.close()
        ratio = layout_speedup(records)
        if ratio is not None:
            print(f"rand/freq time ratio: {ratio:.3f}", file=sys.stderr)
        return EXIT_OK
    else:  # model-check
        rows = run_model_check(args.z, args.D, args.S, args.layout, args.trace_length, args.seed)
        fh = _open_out(args.out)
        try:
            write_model_rows(rows, fh)
        finally:
            if fh is not sys.stdout:
                fh.close()
        worst = max((r.abs_error for r in rows), default=0.0)
        if worst > args.tolerance:
            print(f"model error {worst:.4f} exceeds {args.tolerance}", file=sys.stderr)
            return EXIT_GATE
        return EXIT_OK

    for name, path in files.items():
        print(f"{name}\t{path}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except UsageError as exc:
        print(f"skewidx: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CorrectnessGateError as exc:
        print(f"skewidx: correctness gate failed: {exc}", file=sys.stderr)
        return EXIT_GATE
    except (SkewIndexError, OSError, ValueError) as exc:
        print(f"skewidx: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
