"""Command-line driver.  JSON goes to stdout, logs to stderr."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

from .decomposition import balance_tree_decomposition, build_kl_decomposition, write_td
from .instance import read_instance
from .oracle import exact_sparsest_cut
from .pipeline import (PipelineError, SolveOptions, _Timer, decomposition_stats, load_decomposition,
                       resolve_ell, run_round, run_solve)

log = logging.getLogger("twcut")


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _fail(exc: PipelineError) -> int:
    log.error("%s", exc)
    _emit({"error": str(exc.error), "phase": exc.phase, "type": type(exc.error).__name__})
    return 2


def _options(args) -> SolveOptions:
    return SolveOptions(
        td_path=getattr(args, "td", None),
        ell=args.ell,
        seed=args.seed,
        mode=args.mode,
        dump_lp=getattr(args, "dump_lp", None),
        force_lp=getattr(args, "force_lp", False),
        backend=args.backend,
        samples=getattr(args, "samples", 64),
    )


def cmd_solve(args) -> int:
    try:
        report = run_solve(args.instance, _options(args))
    except PipelineError as exc:
        return _fail(exc)
    _emit(report.to_json())
    return 0 if report.ok else 1


def cmd_round(args) -> int:
    try:
        report = run_round(args.instance, _options(args))
    except PipelineError as exc:
        return _fail(exc)
    _emit(report.to_json())
    return 0 if report.ok else 1


def cmd_exact(args) -> int:
    timer = _Timer()
    try:
        with timer.phase("parse"):
            inst = read_instance(args.instance)
        with timer.phase("exact"):
            cut, phi = exact_sparsest_cut(inst)
    except PipelineError as exc:
        return _fail(exc)
    _emit({"instance": args.instance, "n": inst.n, "cut": sorted(cut.members),
           "phi": f"{phi.numerator}/{phi.denominator}", "timing": timer.ms})
    return 0


def cmd_decompose(args) -> int:
    timer = _Timer()
    try:
        with timer.phase("parse"):
            inst = read_instance(args.instance)
        with timer.phase("decompose"):
            td = load_decomposition(inst, args.td)
        kd = None
        if args.balance or args.ell is not None:
            with timer.phase("balance"):
                td = balance_tree_decomposition(td, inst)
        if args.ell is not None:
            with timer.phase("group"):
                kd = build_kl_decomposition(td, resolve_ell(inst.n, args.ell))
    except PipelineError as exc:
        return _fail(exc)
    out_td = kd.tree if kd is not None else td
    text = write_td(out_td, inst.n)
    if args.out:
        Path(args.out).write_text(text)
    stats = decomposition_stats(td, kd)
    _emit({"instance": args.instance, "stats": stats, "td": text, "out": args.out, "timing": timer.ms})
    return 0


def _bench_one(path: str, opts: SolveOptions) -> dict:
    start = time.perf_counter()
    row: dict = {"instance": Path(path).name}
    try:
        report = run_solve(path, opts)
        inst = read_instance(path)
        _, phi_star = exact_sparsest_cut(inst)
        phi = Fraction(report.phi)
        row.update({
            "n": report.n,
            "width": report.decomposition_stats.get("width"),
            "phi": report.phi,
            "phi_star": f"{phi_star.numerator}/{phi_star.denominator}",
            "opt_lp": report.opt_lp,
            "ratio": float(phi / phi_star),
            "within_2": phi <= 2 * phi_star,
            "fallback": report.fallback,
            "ok": report.ok,
        })
    except PipelineError as exc:
        row.update({"ok": False, "error": str(exc)})
    row["time_ms"] = round((time.perf_counter() - start) * 1000, 3)
    return row


def cmd_bench(args) -> int:
    paths = sorted(str(p) for p in Path(args.directory).glob(args.pattern))
    if not paths:
        log.error("no instances matching %s in %s", args.pattern, args.directory)
        _emit({"error": "no instances", "phase": "bench"})
        return 2
    opts = _options(args)
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        rows = list(pool.map(_bench_one, paths, [opts] * len(paths)))
    header = f"{'instance':<24} {'n':>3} {'w':>2} {'phi':>10} {'phi*':>10} {'opt_lp':>10} {'ratio':>6} {'ms':>9}"
    print(header, file=sys.stderr)
    for r in rows:
        if "error" in r:
            print(f"{r['instance']:<24} ERROR {r['error']}", file=sys.stderr)
            continue
        print(f"{r['instance']:<24} {r['n']:>3} {str(r['width']):>2} {r['phi']:>10} {r['phi_star']:>10} "
              f"{str(r['opt_lp']):>10} {r['ratio']:>6.3f} {r['time_ms']:>9.1f}", file=sys.stderr)
    _emit({"rows": rows, "all_ok": all(r["ok"] for r in rows)})
    return 0 if all(r["ok"] for r in rows) else 1


def _common(p: argparse.ArgumentParser, *, rounding: bool = True) -> None:
    p.add_argument("instance")
    p.add_argument("--ell", type=int, default=None, help="override the grouping parameter")
    if rounding:
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--mode", choices=("derandomized", "randomized"), default="derandomized")
        p.add_argument("--backend", choices=("exact", "exact-cold", "float"), default="exact")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twcut", description="2-approximate non-uniform sparsest cut")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="full pipeline")
    _common(p)
    p.add_argument("--td", help="PACE .td decomposition to ingest")
    p.add_argument("--dump-lp", help="write the full linearized program in CPLEX LP format")
    p.add_argument("--force-lp", action="store_true", help="use the LP path even when n < 16")
    p.add_argument("--samples", type=int, default=64)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("decompose", help="emit a PACE .td decomposition")
    _common(p, rounding=False)
    p.add_argument("--td")
    p.add_argument("--balance", action="store_true")
    p.add_argument("--out", help="also write the .td text here")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("exact", help="brute-force optimum")
    p.add_argument("instance")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("round", help="LP plus rounding on a given decomposition")
    _common(p)
    p.add_argument("--td")
    p.add_argument("--samples", type=int, default=64)
    p.set_defaults(func=cmd_round)

    p = sub.add_parser("bench", help="solve every instance in a directory")
    p.add_argument("directory")
    p.add_argument("--pattern", default="*.sc")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--ell", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("derandomized", "randomized"), default="derandomized")
    p.add_argument("--backend", choices=("exact", "exact-cold", "float"), default="exact")
    p.add_argument("--force-lp", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
