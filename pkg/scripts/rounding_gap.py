"""How far rounding lands from the optimum when the relaxation is not tight.

For K_{2,m} with all-pairs demand among the m-side, and for random
fractional mixtures on small instances, compare the derandomized cut,
the best of many samples, the LP value and the exact optimum.
"""
from __future__ import annotations

import argparse
import itertools
import json
import random
from fractions import Fraction

from twcut.decomposition import (balance_tree_decomposition, build_ground_sets, build_kl_decomposition,
                                 heuristic_tree_decomposition)
from twcut.generators import random_instance
from twcut.instance import Instance
from twcut.lp import solve_linear_program
from twcut.oracle import OracleError, enumerate_rounding_distribution, exact_sparsest_cut, mixture_lp_point
from twcut.relaxation import build_fractional_lp, extract_solution, to_linear_program
from twcut.rounding import _Sampler, derandomize, is_degenerate, randomized_round


def k2m(m: int) -> Instance:
    leaves = range(2, m + 2)
    return Instance(m + 2, tuple((h, v, 1) for h in (0, 1) for v in leaves),
                    tuple((u, v, 1) for u, v in itertools.combinations(leaves, 2)))


def pipeline_parts(inst: Instance, ell: int):
    td = balance_tree_decomposition(heuristic_tree_decomposition(inst), inst)
    kd = build_kl_decomposition(td, ell)
    gsf = build_ground_sets(kd)
    flp = build_fractional_lp(inst, gsf)
    prog = to_linear_program(flp, "projected")
    return kd, gsf, extract_solution(flp, prog, solve_linear_program(prog.lp))


def compare(inst, kd, xy, samples: int, seed: int) -> dict:
    der = derandomize(inst, xy, kd).members
    sampler = _Sampler(xy, kd)
    rng = random.Random(seed)
    draws = [randomized_round(xy, kd, rng, sampler).result for _ in range(samples)]
    phis = [Fraction(*inst.crossing(d)) for d in draws if not is_degenerate(inst, d)]
    _, phi_star = exact_sparsest_cut(inst)
    cap, dem = inst.crossing(der)
    row = {
        "n": inst.n,
        "phi_star": str(phi_star),
        "point_value": str(xy.opt_lp),  # LP optimum, or the mixture's own ratio
        "derandomized": str(Fraction(cap, dem)) if dem else None,
        "best_sample": str(min(phis)) if phis else None,
        "defined_samples": len(phis),
    }
    try:
        dist = enumerate_rounding_distribution(xy, kd)
    except OracleError:
        return row
    else:
        num = sum((c * dist.separation(u, v) for u, v, c in inst.supply), Fraction(0))
        den = sum((d * dist.separation(u, v) for u, v, d in inst.demand), Fraction(0))
        row["expected_ratio"] = str(num / den)
    return row


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=256)
    ap.add_argument("--mixtures", type=int, default=10)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    for m in (4, 5, 6):
        inst = k2m(m)
        kd, _, xy = pipeline_parts(inst, 2)
        print(json.dumps({"family": f"K2,{m}"} | compare(inst, kd, xy, args.samples, args.seed)))
    rng = random.Random(args.seed)
    for i in range(args.mixtures):
        inst = random_instance(rng, rng.randint(6, 9), 2, 0.6, 4)
        kd, gsf, _ = pipeline_parts(inst, 2)
        cuts = [rng.randrange(1, inst.full_mask) for _ in range(3)]
        try:
            xy = mixture_lp_point(inst, gsf, [(c, Fraction(1, 3)) for c in cuts])
        except OracleError:  # no cut in the mixture separates demand
            continue
        print(json.dumps({"family": f"mixture-{i}"} | compare(inst, kd, xy, args.samples, args.seed)))


if __name__ == "__main__":
    main()
