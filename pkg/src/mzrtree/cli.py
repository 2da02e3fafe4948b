"""Command-line front end: build stores, run queries, benchmark, report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 store consistency
error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .bench import ALL_ENGINES, run_bench
from .builder import DEFAULT_RAM_BUDGET, build_store, build_store_from_mzxml
from .errors import ConsistencyError, MzRTreeError
from .generate import GenMode, GenSpec, emit_mzxml, generate, interleave_levels
from .index import IndexParams
from .model import QueryRect
from .mzxml import PeaksEncoding
from .query import PeptideSize, peptide_rect, query_rect_from_physical, range_query
from .storage import Store

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CONSISTENCY = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_gen_flags(p, required: bool):
    p.add_argument("--spectra", type=int, required=required,
                   help="number of spectra (rows)")
    p.add_argument("--mz-min", type=float, default=None)
    p.add_argument("--mz-max", type=float, default=None)
    p.add_argument("--resolution", type=float, default=0.001,
                   help="m/z grid step in Da (default 0.001)")
    p.add_argument("--d", type=float, default=None, dest="density",
                   help="target density in (0, 1]")
    p.add_argument("--mode", choices=[m.value for m in GenMode], default="uniform")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> _Parser:
    parser = _Parser(prog="mzrtree", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic mzXML file")
    _add_gen_flags(p, required=True)
    p.add_argument("--out", required=True, help="output mzXML path (.gz ok)")
    p.add_argument("--precision", type=int, choices=(32, 64), default=64)
    p.add_argument("--ms-level", type=int, default=1)
    p.add_argument("--ms2-density", type=float, default=None,
                   help="also interleave MS2 scans at this density")

    p = sub.add_parser("build", help="build a store from mzXML or a generator")
    p.add_argument("--input", help="mzXML path; omit to build from generator flags")
    p.add_argument("--out", required=True, help="store directory")
    p.add_argument("--ms-level", type=int, default=1)
    p.add_argument("--k", type=int, default=None, help="strip count (default: auto)")
    p.add_argument("--bb-width-da", type=float, default=5.0)
    p.add_argument("--f", type=int, default=200, dest="leaf_capacity",
                   help="index leaf capacity")
    p.add_argument("--intensity-bits", type=int, choices=(32, 64), default=32)
    p.add_argument("--ram-budget-mb", type=int, default=DEFAULT_RAM_BUDGET >> 20,
                   help="per-strip memory budget used when --k is omitted")
    _add_gen_flags(p, required=False)

    p = sub.add_parser("query", help="run one range query against a store")
    p.add_argument("store", help="store directory")
    p.add_argument("--workload", required=True,
                   choices=["chrom", "spectra", "pep-small", "pep-large", "rect"])
    p.add_argument("--rect", help="grid rect as rt1:rt2:mz1:mz2 (half-open bounds)")
    p.add_argument("--mz-center", type=float, help="window center in Da")
    p.add_argument("--window-da", type=float, default=5.0)
    p.add_argument("--rt-row", type=int, help="first row (spectra) or center row (pep)")
    p.add_argument("--rows", type=int, default=20, help="rows in a spectra block")
    p.add_argument("--format", choices=["count", "csv", "json"], default="count")

    p = sub.add_parser("bench", help="run the benchmark protocol")
    p.add_argument("stores", nargs="+", help="one or more store directories")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--queries", type=int, default=10)
    p.add_argument("--engines", default=",".join(ALL_ENGINES),
                   help="comma-separated subset of: " + ", ".join(ALL_ENGINES))
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", default=None, help="report directory")
    p.add_argument("--plot", action="store_true", help="also render figures")
    p.add_argument("--threads", type=int, default=0,
                   help="validate concurrent readers with N threads")
    p.add_argument("--no-verify", action="store_true",
                   help="skip cross-engine result checks")
    p.add_argument("--seed", type=int, default=0, help="recorded in the report")

    p = sub.add_parser("space", help="compare store size against an mzXML file")
    p.add_argument("store", help="store directory")
    p.add_argument("mzxml", help="mzXML file to compare against")

    p = sub.add_parser("info", help="print a store summary")
    p.add_argument("store", help="store directory")
    p.add_argument("--verify", action="store_true",
                   help="checksum every referenced file")
    return parser


def _open_store(path) -> Store:
    p = Path(path)
    if not p.is_dir() or not (p / "manifest.json").exists():
        raise _UsageError(f"{path} is not a store directory")
    return Store.open(p)


def _gen_spec(args, ms_level=None, density=None, seed=None) -> GenSpec:
    if args.density is None and density is None:
        raise _UsageError("--d is required when generating")
    if args.mz_min is None or args.mz_max is None:
        raise _UsageError("--mz-min and --mz-max are required when generating")
    return GenSpec(
        spectra_count=args.spectra,
        mz_min=args.mz_min,
        mz_max=args.mz_max,
        resolution=args.resolution,
        target_density=density if density is not None else args.density,
        mode=GenMode(args.mode),
        seed=seed if seed is not None else args.seed,
        ms_level=ms_level if ms_level is not None else getattr(args, "ms_level", 1),
    )


def cmd_gen(args) -> int:
    spec = _gen_spec(args, ms_level=args.ms_level)
    records = list(generate(spec))
    if args.ms2_density is not None:
        ms2 = _gen_spec(args, ms_level=2, density=args.ms2_density, seed=args.seed + 1)
        records = interleave_levels(records, generate(ms2))
    n = emit_mzxml(records, args.out, PeaksEncoding(precision=args.precision))
    size = Path(args.out).stat().st_size
    print(f"wrote {n} scans to {args.out} ({size} bytes)")
    return EXIT_OK


def cmd_build(args) -> int:
    params = IndexParams(f=args.leaf_capacity)
    common = dict(
        ms_level=args.ms_level,
        k=args.k,
        bb_width_da=args.bb_width_da,
        index_params=params,
        intensity_bits=args.intensity_bits,
        ram_budget_bytes=args.ram_budget_mb << 20,
    )
    if args.input:
        result = build_store_from_mzxml(
            args.input,
            args.out,
            mz_min=args.mz_min,
            mz_max=args.mz_max,
            resolution=args.resolution,
            **common,
        )
    else:
        if args.spectra is None:
            raise _UsageError("either --input or generator flags are required")
        spec = _gen_spec(args)
        result = build_store(
            lambda: generate(spec),
            args.out,
            mz_min=spec.mz_min,
            mz_max=spec.mz_max,
            resolution=spec.resolution,
            **common,
        )
    m = result.manifest
    store_bytes = sum(
        (result.out_dir / f).stat().st_size
        for f in [s.file for s in m.strips] + [m.index_file, "manifest.json"]
    )
    print(f"built {result.out_dir} in {result.elapsed_s:.2f}s")
    print(
        f"  rows={m.meta.rows} cols={m.meta.cols} k={m.meta.strip_count} "
        f"nnz={m.nnz} density={m.nnz / m.meta.cells:.4%}"
    )
    print(
        f"  bbs={result.bb_count} (dense={m.census['dense_bbs']} "
        f"sparse={m.census['sparse_bbs']}) store_bytes={store_bytes}"
    )
    if result.stats.peaks_dropped_out_of_range or result.stats.collisions_summed:
        print(
            f"  dropped_out_of_range={result.stats.peaks_dropped_out_of_range} "
            f"collisions_summed={result.stats.collisions_summed}"
        )
    return EXIT_OK


def _query_rect(args, meta) -> QueryRect:
    w = args.workload
    if w == "rect":
        if not args.rect:
            raise _UsageError("--rect is required for the rect workload")
        try:
            rt1, rt2, mz1, mz2 = (int(v) for v in args.rect.split(":"))
            return QueryRect(rt1, rt2, mz1, mz2)
        except ValueError as exc:
            raise _UsageError(f"bad --rect {args.rect!r}: {exc}") from None
    if w == "chrom":
        if args.mz_center is None:
            raise _UsageError("--mz-center is required for chrom")
        half = args.window_da / 2
        return query_rect_from_physical(
            float("-inf"), float("inf"),
            args.mz_center - half, args.mz_center + half, meta,
        )
    if w == "spectra":
        if args.rt_row is None:
            raise _UsageError("--rt-row is required for spectra")
        return QueryRect(
            args.rt_row - 1, args.rt_row + args.rows - 1, -1, meta.cols - 1
        ).clipped(meta)
    if args.mz_center is None or args.rt_row is None:
        raise _UsageError("--mz-center and --rt-row are required for peptide queries")
    size = PeptideSize.SMALL if w == "pep-small" else PeptideSize.LARGE
    return peptide_rect(meta, args.mz_center, args.rt_row, size)


def cmd_query(args) -> int:
    with _open_store(args.store) as store:
        rect = _query_rect(args, store.meta)
        result = range_query(store, rect)
        if args.format == "count":
            print(len(result))
        elif args.format == "csv":
            writer = csv.writer(sys.stdout)
            writer.writerow(["row", "col", "intensity"])
            for r, c, i in zip(result.rows, result.cols, result.intensities):
                writer.writerow([int(r), int(c), float(i)])
        else:
            import json

            print(
                json.dumps(
                    {
                        "entries": len(result),
                        "total_intensity": result.total_intensity(),
                        "bbs_touched": result.stats.bbs_touched,
                        "nodes_visited": result.stats.nodes_visited,
                        "bytes_read": result.stats.bytes_read,
                        "elapsed_s": result.stats.elapsed_s,
                    },
                    indent=2,
                )
            )
    return EXIT_OK


def cmd_bench(args) -> int:
    from . import plots

    engines = tuple(e.strip() for e in args.engines.split(",") if e.strip())
    unknown = [e for e in engines if e not in ALL_ENGINES]
    if unknown:
        raise _UsageError(f"unknown engines: {', '.join(unknown)}")
    for store_dir in args.stores:
        _open_store(store_dir).close()
    out_dir = Path(args.out) if args.out else Path(args.stores[0]) / "reports"
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for store_dir in args.stores:
        report = run_bench(
            store_dir,
            reps=args.reps,
            queries=args.queries,
            engines=engines,
            verify_results=not args.no_verify,
            threads=args.threads,
        )
        reports.append(report)
        tag = Path(store_dir).name
        suffix = f"_{tag}" if len(args.stores) > 1 else ""
        if args.format == "csv":
            report.write_csv(out_dir / f"bench{suffix}.csv")
        report.write_json(out_dir / f"bench{suffix}.json")
        if args.plot:
            plots.plot_access_times(report, out_dir / f"access_times{suffix}.png")
            plots.plot_load_times(report, out_dir / f"load_times{suffix}.png")
        for row in report.rows:
            print(
                f"{tag} {row.engine:>15} {row.workload:>9} "
                f"access={row.access_mean_s * 1e3:9.3f}ms "
                f"load={row.load_mean_s * 1e3:8.3f}ms entries={row.entries}"
            )
    if args.plot and len(reports) > 1:
        plots.plot_density_sweep(reports, out_dir / "density_sweep.png")
    print(f"reports written to {out_dir}")
    return EXIT_OK


def cmd_space(args) -> int:
    mzxml_path = Path(args.mzxml)
    if not mzxml_path.exists():
        raise _UsageError(f"no such file: {mzxml_path}")
    with _open_store(args.store) as store:
        m = store.manifest
        files = [s.file for s in m.strips] + [m.index_file, "manifest.json"]
        store_bytes = sum((store.path / f).stat().st_size for f in files)
    mzxml_bytes = mzxml_path.stat().st_size
    savings = (1.0 - store_bytes / mzxml_bytes) * 100.0
    print(f"store bytes:  {store_bytes}")
    print(f"mzxml bytes:  {mzxml_bytes}")
    print(f"savings:      {savings:.2f}%")
    print(
        f"bb census:    dense={m.census['dense_bbs']} "
        f"({m.census['dense_record_bytes']} B), "
        f"sparse={m.census['sparse_bbs']} ({m.census['sparse_record_bytes']} B)"
    )
    return EXIT_OK


def cmd_info(args) -> int:
    with _open_store(args.store) as store:
        m = store.manifest
        print(f"store:     {store.path}")
        print(f"ms level:  {m.meta.ms_level}")
        print(f"grid:      {m.meta.rows} rows x {m.meta.cols} cols "
              f"({m.meta.mz_min}-{m.meta.mz_max} Da at {m.meta.resolution})")
        print(f"nnz:       {m.nnz} (density {m.nnz / m.meta.cells:.4%})")
        print(f"strips:    {m.meta.strip_count}")
        print(f"bbs:       {m.index_params.get('w')} "
              f"(dense={m.census['dense_bbs']} sparse={m.census['sparse_bbs']})")
        print(f"index:     d={m.index_params['d']} f={m.index_params['f']} "
              f"{m.index_bytes} bytes")
        if args.verify:
            store.verify()
            print("verify:    all checksums ok")
    return EXIT_OK


_COMMANDS = {
    "gen": cmd_gen,
    "build": cmd_build,
    "query": cmd_query,
    "bench": cmd_bench,
    "space": cmd_space,
    "info": cmd_info,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConsistencyError as exc:
        print(f"consistency error: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except (MzRTreeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
