"""Acceptance criteria, one test per criterion; verdicts are echoed in the terminal summary."""
from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest

from twcut.bits import submasks
from twcut.decomposition import (balance_tree_decomposition, balanced_depth_bound, build_kl_decomposition,
                                 heuristic_tree_decomposition, validate_tree_decomposition)
from twcut.generators import CorpusConfig, corpus, random_tree_decomposition
from twcut.oracle import enumerate_rounding_distribution, exact_sparsest_cut, integral_point_violations
from twcut.pipeline import SolveOptions, certifies, solve_instance
from twcut.relaxation import build_fractional_lp
from twcut.rounding import (ConditionalProbabilities, _Sampler, derandomize, iter_prefix_assignments,
                            randomized_round)
from twcut.selector import solve_alpha

from conftest import record

MC_DRAWS = 100_000
NESTED_PAIRS = 1000
RANDOM_CUTS = 5


class CorpusRun:
    def __init__(self, inst, report, prep, phi_star):
        self.inst, self.report, self.prep, self.phi_star = inst, report, prep, phi_star


@pytest.fixture(scope="module")
def corpus_runs() -> list[CorpusRun]:
    runs = []
    for inst in corpus(CorpusConfig(count=100)):
        report, prep = solve_instance(inst, SolveOptions(force_lp=True, mode="derandomized"))
        runs.append(CorpusRun(inst, report, prep, exact_sparsest_cut(inst)[1]))
    return runs


@pytest.fixture(scope="module")
def tiny_points(tiny_cases):
    """(case, label, xy, enumerated distribution) for the LP optimum and a fractional mixture."""
    out = []
    for i, case in enumerate(tiny_cases):
        for label, xy in (("lp", case.xy), ("mix", case.mix)):
            out.append((case, f"{i}/{label}", xy, enumerate_rounding_distribution(xy, case.kd)))
    return out


def test_c1_two_approximation(corpus_runs):
    widths = [heuristic_tree_decomposition(r.inst).width for r in corpus_runs]
    bad = [i for i, r in enumerate(corpus_runs) if not Fraction(r.report.phi) <= 2 * r.phi_star]
    ratios = [Fraction(r.report.phi) / r.phi_star for r in corpus_runs]
    ok = len(corpus_runs) >= 100 and max(widths) <= 3 and not bad
    ns = [r.inst.n for r in corpus_runs]
    record(1, ok, f"{len(corpus_runs)} instances, n in [{min(ns)},{max(ns)}], width <= {max(widths)}, "
                  f"max phi/phi* = {float(max(ratios)):.3f}, violations {bad}")
    assert ok


def test_c2_relaxation_soundness(corpus_runs):
    rng = random.Random(2)
    above, infeasible, checked = [], 0, 0
    for i, r in enumerate(corpus_runs):
        if r.prep.xy.opt_lp > r.phi_star:
            above.append(i)
        flp = build_fractional_lp(r.inst, r.prep.xy.gsf)
        cuts = [rng.randrange(r.inst.full_mask + 1) for _ in range(RANDOM_CUTS)]
        cuts.append(sum(1 << v for v in r.report.cut))
        for c in cuts:
            infeasible += sum(integral_point_violations(flp, c).values()) > 0
            checked += 1
    ok = not above and infeasible == 0
    record(2, ok, f"opt_lp <= phi* on all but {len(above)}; {checked} integral points, {infeasible} infeasible")
    assert ok


def test_c3_exact_marginals(tiny_points):
    checks, bad = 0, []
    for case, label, xy, dist in tiny_points:
        kd = case.kd
        for y in range(len(kd.bags)):
            for s in submasks(kd.scope_mask[y]):
                marg = dist.marginal(s)
                for t in submasks(s):
                    checks += 1
                    if marg.get(t, 0) != xy.x(s, t):
                        bad.append((label, y, s, t))
    ns = {case.inst.n for case, *_ in tiny_points}
    bags = {len(case.kd.bags) for case, *_ in tiny_points}
    ok = not bad and len(tiny_points) >= 20 and max(ns) <= 8 and max(bags) <= 3
    record(3, ok, f"{len(tiny_points) // 2} instances x 2 points, n <= {max(ns)}, bags {sorted(bags)}, "
                  f"{checks} (S,T) checks, {len(bad)} mismatches")
    assert ok


def test_c4_separation_laws(tiny_points):
    supply_bad = demand_bad = mc_bad = mc_checks = 0
    worst = 0.0
    for case, label, xy, dist in tiny_points:
        inst, kd = case.inst, case.kd
        supply_bad += sum(dist.separation(u, v) != xy.y(u, v) for u, v, _ in inst.supply)
        demand_bad += sum(2 * dist.separation(u, v) < xy.y(u, v) for u, v, _ in inst.demand)
        sampler = _Sampler(xy, kd)
        # a supply edge and a demand edge may share a node pair; count each pair once
        pairs = sorted({(u, v) for u, v, _ in inst.supply + inst.demand})
        hits = dict.fromkeys(pairs, 0)
        for seed in range(MC_DRAWS):
            b = randomized_round(xy, kd, seed, sampler).result
            for u, v in pairs:
                hits[(u, v)] += (b >> u & 1) != (b >> v & 1)
        for e, k in hits.items():
            p = dist.separation(*e)
            mean, sd = MC_DRAWS * p, math.sqrt(MC_DRAWS * p * (1 - p))
            dev = abs(k - mean)
            mc_checks += 1
            if sd == 0:
                mc_bad += dev != 0
            else:
                worst = max(worst, float(dev / sd))
                mc_bad += dev > 3 * sd
    ok = supply_bad == 0 and demand_bad == 0 and mc_bad == 0
    record(4, ok, f"supply != y: {supply_bad}, demand < y/2: {demand_bad}, Monte Carlo {MC_DRAWS} seeds: "
                  f"{mc_bad}/{mc_checks} edges beyond 3 sd (worst {worst:.2f} sd)")
    assert ok


def test_c5_nested_marginalization(corpus_runs, tiny_points):
    rng = random.Random(5)
    solutions = [(r.prep.xy, build_fractional_lp(r.inst, r.prep.xy.gsf).closure) for r in corpus_runs]
    solutions += [(xy, case.flp.closure) for case, _, xy, _ in tiny_points]
    nested_bad = measure_bad = pairs = sets = 0
    for xy, closure in solutions:
        for s in closure:
            sets += 1
            measure_bad += sum(xy.marginal(s).values()) != 1
        for _ in range(NESTED_PAIRS):
            big = rng.choice(closure)
            small = rng.choice(list(submasks(big)))
            c = rng.choice(list(submasks(small)))
            rest = big & ~small
            total = sum((xy.x(big, c | extra) for extra in submasks(rest)), Fraction(0))
            pairs += 1
            nested_bad += total != xy.x(small, c)
    ok = nested_bad == 0 and measure_bad == 0
    record(5, ok, f"{len(solutions)} solved points, {pairs} nested pairs ({nested_bad} bad), "
                  f"{sets} unit-measure sets ({measure_bad} bad)")
    assert ok


def test_c6_inequality_grid():
    grid = [Fraction(i, 100) for i in range(101)]
    bad = [(a, b) for a in grid for b in grid if min(a * b, (1 - a) * (1 - b)) > a * (1 - b) + b * (1 - a)]
    record(6, not bad, f"{len(grid) ** 2} grid pairs, {len(bad)} violations")
    assert not bad


def test_c7_selector_grid():
    xs = [4 * (2**18) ** (i / 999) for i in range(1000)]
    xs[-1] = 2.0**20
    worst, bound_bad = 0.0, 0
    for x in xs:
        sol = solve_alpha(x)
        worst = max(worst, sol.residual)
        c = sol.ceil
        bound_bad += not (2**c + x / c <= 12 * x / math.log2(x))
    spots = solve_alpha(8).alpha_star == 2 and solve_alpha(24).alpha_star == 3
    ok = worst <= 1e-12 and bound_bad == 0 and spots
    record(7, ok, f"1000 points in [4, 2^20], max residual {worst:.1e}, bound failures {bound_bad}, "
                  f"alpha*(8)=2 and alpha*(24)=3: {spots}")
    assert ok


def test_c8_decomposition_contracts():
    rng = random.Random(8)
    failures = []
    for trial in range(100):
        b, w = rng.randint(1, 64), rng.randint(1, 4)
        td, inst = random_tree_decomposition(rng, b, w)
        bal = balance_tree_decomposition(td, inst)
        if not (bal.is_binary and bal.depth <= balanced_depth_bound(len(td.bags))
                and bal.width + 1 <= 3 * (td.width + 1) and validate_tree_decomposition(inst, bal).ok):
            failures.append((trial, "balance"))
            continue
        for ell in (2, 3, 4, 5):
            kd = build_kl_decomposition(bal, ell)
            if not (validate_tree_decomposition(inst, kd.tree).ok
                    and max(len(j) for j in kd.adhesion) <= 3 * td.width + 3
                    and kd.depth <= math.ceil(bal.depth / (ell - 1))):
                failures.append((trial, f"group ell={ell}"))
    record(8, not failures, f"100 decompositions (b <= 64, w <= 4), ell in 2..5, failures {failures}")
    assert not failures


def test_c9_derandomization_invariant(corpus_runs, tiny_cases):
    runs = bad = fallbacks = 0
    for r in corpus_runs:
        runs += 1
        stats = r.report.rounding_stats
        cut = sum(1 << v for v in r.report.cut)
        steps_ok = stats["invariant_held"] and stats["steps"] == len(r.prep.kd.bags)
        fallbacks += r.report.fallback
        bad += not (steps_ok and certifies(r.inst, cut, r.prep.xy.opt_lp))
    for case in tiny_cases:
        for xy in (case.xy, case.mix):
            runs += 1
            out = derandomize(case.inst, xy, case.kd)
            bad += not (out.invariant_held and len(out.steps) == len(case.kd.bags)
                        and certifies(case.inst, out.members, xy.opt_lp))
    record(9, bad == 0, f"{runs} derandomized runs, {bad} failures, {fallbacks} fallbacks")
    assert bad == 0


def test_c10_total_probability(tiny_points):
    checks = bad = 0
    for case, label, xy, dist in tiny_points:
        cp = ConditionalProbabilities(xy, case.kd)
        for t in range(len(case.kd.bags) + 1):
            assigns = list(iter_prefix_assignments(case.kd, xy, t))
            for u, v, _ in case.inst.supply + case.inst.demand:
                total = sum((p * cp.separation(u, v, t, a) for a, p in assigns), Fraction(0))
                checks += 1
                bad += total != dist.separation(u, v)
    record(10, bad == 0, f"{checks} (prefix, edge) sums, {bad} mismatches")
    assert bad == 0
