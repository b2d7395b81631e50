"""End-to-end solve: parse, decompose, relax, round, certify."""
from __future__ import annotations

import logging
import random
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from .bits import members, popcount
from .decomposition import (KLDecomposition, TreeDecomposition, balance_tree_decomposition,
                            build_ground_sets, build_kl_decomposition, heuristic_tree_decomposition,
                            parse_td, validate_tree_decomposition)
from .instance import Instance, read_instance, sparsity
from .lp import solve_linear_program
from .oracle import exact_sparsest_cut
from .relaxation import (DEFAULT_MEMORY_GUARD, XYSolution, build_fractional_lp, extract_solution,
                         to_linear_program, write_full_lp)
from .rounding import (RoundingError, _Sampler, derandomize, fallback_cut, is_degenerate,
                       randomized_round)
from .selector import MIN_NODES, choose_ell

log = logging.getLogger(__name__)

DEFAULT_SMALL_ELL = 2


class PipelineError(RuntimeError):
    def __init__(self, phase: str, error: BaseException):
        self.phase = phase
        self.error = error
        super().__init__(f"[{phase}] {type(error).__name__}: {error}")


@dataclass(frozen=True)
class SolveOptions:
    td_path: str | None = None
    ell: int | None = None
    seed: int = 0
    mode: str = "derandomized"  # or "randomized"
    dump_lp: str | None = None
    force_lp: bool = False
    backend: str = "exact"
    memory_guard: int = DEFAULT_MEMORY_GUARD
    samples: int = 64  # randomized mode keeps the best of this many draws


@dataclass
class SolveReport:
    instance: str
    n: int
    cut: list[int]
    phi: str
    opt_lp: str | None
    approx_certificate: bool
    ell_used: int | None
    mode: str
    fallback: bool
    decomposition_stats: dict = field(default_factory=dict)
    lp_stats: dict = field(default_factory=dict)
    rounding_stats: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    @property
    def ok(self) -> bool:
        return self.phi != "undefined" and self.approx_certificate


def _frac(q: Fraction | None) -> str | None:
    if q is None:
        return None
    return f"{q.numerator}/{q.denominator}"


class _Timer:
    def __init__(self):
        self.ms: dict[str, float] = {}

    @contextmanager
    def phase(self, name: str):
        start = time.perf_counter()
        try:
            yield
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(name, exc) from exc
        finally:
            self.ms[name] = round((time.perf_counter() - start) * 1000, 3)


def certifies(inst: Instance, cut: int, opt_lp: Fraction) -> bool:
    """``cap(delta(S)) <= 2 opt_lp dem(delta(S))`` with some demand separated."""
    cap, dem = inst.crossing(cut)
    return dem > 0 and cap <= 2 * opt_lp * dem


def decomposition_stats(td: TreeDecomposition, kd: KLDecomposition | None = None) -> dict:
    stats = {"width": td.width, "depth": td.depth, "bags": len(td.bags), "binary": td.is_binary}
    if kd is not None:
        stats.update({
            "grouped_bags": len(kd.bags),
            "grouped_depth": kd.depth,
            "grouped_width": kd.tree.width,
            "adhesion_max": max((len(j) for j in kd.adhesion), default=0),
            "scope_max": max(popcount(m) for m in kd.scope_mask),
        })
    return stats


@dataclass
class Prepared:
    """Everything upstream of rounding, reusable by the ``round`` subcommand."""

    inst: Instance
    source: TreeDecomposition
    balanced: TreeDecomposition
    kd: KLDecomposition
    xy: XYSolution
    ell: int
    lp_stats: dict


def load_decomposition(inst: Instance, td_path: str | None) -> TreeDecomposition:
    if td_path is None:
        return heuristic_tree_decomposition(inst)
    td, n = parse_td(Path(td_path).read_text())
    if n != inst.n:
        raise ValueError(f"decomposition declares {n} nodes, instance has {inst.n}")
    check = validate_tree_decomposition(inst, td)
    if not check.ok:
        raise ValueError(f"invalid decomposition: {check.violation.message}")
    return td


def resolve_ell(n: int, requested: int | None) -> int:
    if requested is not None:
        return requested
    return choose_ell(n) if n >= MIN_NODES else DEFAULT_SMALL_ELL


def prepare(inst: Instance, opts: SolveOptions, timer: _Timer) -> Prepared:
    with timer.phase("decompose"):
        source = load_decomposition(inst, opts.td_path)
    with timer.phase("balance"):
        balanced = balance_tree_decomposition(source, inst)
    with timer.phase("select_ell"):
        ell = resolve_ell(inst.n, opts.ell)
    with timer.phase("group"):
        kd = build_kl_decomposition(balanced, ell)
        gsf = build_ground_sets(kd)
    with timer.phase("build_lp"):
        flp = build_fractional_lp(inst, gsf, opts.memory_guard)
    if opts.dump_lp:
        with timer.phase("dump_lp"), open(opts.dump_lp, "w") as fh:
            write_full_lp(flp, fh)
    with timer.phase("linearize"):
        prog = to_linear_program(flp, "projected")
    with timer.phase("solve_lp"):
        result = solve_linear_program(prog.lp, opts.backend)
    with timer.phase("extract"):
        xy = extract_solution(flp, prog, result)
    lp_stats = {
        "x_vars": flp.x_var_count,
        "y_vars": flp.y_var_count,
        "rows": flp.row_counts(),
        "solved_form": "projected",
        "solved_columns": prog.lp.num_vars,
        "solved_rows": prog.lp.num_rows,
        "status": result.status,
        "backend": result.backend,
        "pivots": result.pivots,
        "warm_certified": result.warm_certified,
        "ground_sets": len(gsf.ground_sets),
        "maximal_ground_sets": len(gsf.maximal),
    }
    return Prepared(inst, source, balanced, kd, xy, ell, lp_stats)


def best_sample(prep: Prepared, seed: int, samples: int) -> tuple[int, list[int]]:
    """Best defined-sparsity cut among ``samples`` draws, plus every drawn cut."""
    rng = random.Random(seed)
    sampler = _Sampler(prep.xy, prep.kd)
    draws = [randomized_round(prep.xy, prep.kd, rng, sampler).result for _ in range(samples)]
    defined = [d for d in draws if not is_degenerate(prep.inst, d)]
    if not defined:
        return draws[0], draws
    return min(defined, key=lambda m: (sparsity(prep.inst, m), members(m))), draws


@dataclass
class RoundReport:
    instance: str
    cut: list[int]
    numerator: int
    denominator: int
    phi: str
    opt_lp: str
    approx_certificate: bool
    fallback: bool
    mode: str
    seed: int
    samples: int
    sample_summary: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    @property
    def ok(self) -> bool:
        return self.phi != "undefined" and self.approx_certificate


def run_round(path: str | Path, opts: SolveOptions) -> RoundReport:
    """Rounding only, always through the LP regardless of ``n``."""
    timer = _Timer()
    with timer.phase("parse"):
        inst = read_instance(path)
    prep = prepare(inst, opts, timer)
    opt_lp = prep.xy.opt_lp
    summary: dict = {}
    with timer.phase("round"):
        if opts.mode == "derandomized":
            chosen = derandomize(inst, prep.xy, prep.kd, opt_lp).members
        elif opts.mode == "randomized":
            chosen, draws = best_sample(prep, opts.seed, opts.samples)
            good = [d for d in draws if not is_degenerate(inst, d)]
            summary = {
                "drawn": len(draws),
                "defined": len(good),
                "certified": sum(certifies(inst, d, opt_lp) for d in draws),
                "distinct": len(set(draws)),
            }
        else:
            raise ValueError(f"unknown mode {opts.mode!r}")
    fallback = is_degenerate(inst, chosen)
    if fallback:
        chosen, summary["fallback_source"] = fallback_cut(inst, prep.xy, prep.kd, opts.seed)
    cap, dem = inst.crossing(chosen)
    phi = Fraction(cap, dem) if dem else None
    return RoundReport(
        str(path), members(chosen), cap, dem, _frac(phi) if phi is not None else "undefined",
        _frac(opt_lp), certifies(inst, chosen, opt_lp), fallback, opts.mode, opts.seed,
        opts.samples if opts.mode == "randomized" else 0, summary,
    )


def run_solve(path: str | Path, opts: SolveOptions = SolveOptions()) -> SolveReport:
    timer = _Timer()
    with timer.phase("parse"):
        inst = read_instance(path)
    return solve_instance(inst, opts, str(path), timer)[0]


def solve_instance(inst: Instance, opts: SolveOptions = SolveOptions(), label: str = "<memory>",
                   timer: _Timer | None = None) -> tuple[SolveReport, Prepared | None]:
    """The pipeline after parsing; also hands back the LP-side artefacts (None on the exact route)."""
    timer = timer or _Timer()
    path = label
    if inst.n < MIN_NODES and not opts.force_lp:
        with timer.phase("exact"):
            cut, phi = exact_sparsest_cut(inst)
        log.info("n=%d < %d: exact enumeration", inst.n, MIN_NODES)
        return SolveReport(path, inst.n, sorted(cut.members), _frac(phi), None, True, None,
                           "exact", False, timing=timer.ms), None
    prep = prepare(inst, opts, timer)
    opt_lp = prep.xy.opt_lp
    rounding_stats: dict = {}
    with timer.phase("round"):
        if opts.mode == "derandomized":
            der = derandomize(inst, prep.xy, prep.kd, opt_lp)
            chosen = der.members
            rounding_stats = {
                "steps": len(der.steps),
                "invariant_held": der.invariant_held,
                "initial_expectation": _frac(der.initial_expectation),
                "max_step_expectation": _frac(max(s.expectation for s in der.steps)),
            }
        elif opts.mode == "randomized":
            chosen, _ = best_sample(prep, opts.seed, opts.samples)
            rounding_stats = {"samples": opts.samples, "seed": opts.seed}
        else:
            raise ValueError(f"unknown mode {opts.mode!r}")
    fallback = False
    if is_degenerate(inst, chosen) or not certifies(inst, chosen, opt_lp):
        with timer.phase("fallback"):
            chosen, source = fallback_cut(inst, prep.xy, prep.kd, opts.seed)
        fallback = True
        rounding_stats["fallback_source"] = source
        log.warning("rounding produced a degenerate or uncertified cut; fallback from %s", source)
    phi = sparsity(inst, chosen) if 0 < chosen < inst.full_mask else None
    cert = certifies(inst, chosen, opt_lp)
    if not cert:
        raise PipelineError("certify", RoundingError(
            f"cut {members(chosen)} misses the 2*opt_lp bound (phi={phi}, opt_lp={opt_lp})"))
    report = SolveReport(
        path, inst.n, members(chosen), _frac(phi) if phi is not None else "undefined", _frac(opt_lp),
        cert, prep.ell, opts.mode, fallback, decomposition_stats(prep.balanced, prep.kd),
        prep.lp_stats, rounding_stats, timer.ms,
    )
    return report, prep
