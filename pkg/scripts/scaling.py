"""LP size and solve time as n and the grouping parameter grow.

Writes one JSON row per (instance, ell) to stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import random
from dataclasses import asdict, dataclass

from twcut.generators import random_instance
from twcut.pipeline import PipelineError, SolveOptions, solve_instance


@dataclass(frozen=True)
class ScalingConfig:
    sizes: tuple[int, ...] = (16, 20, 24, 28)
    width: int = 2
    ells: tuple[int, ...] = (2, 3)
    per_size: int = 3
    demands: int = 4
    seed: int = 0
    memory_guard: int = 2_000_000


def run(cfg: ScalingConfig):
    rng = random.Random(cfg.seed)
    for n in cfg.sizes:
        for rep in range(cfg.per_size):
            inst = random_instance(rng, n, cfg.width, 0.6, cfg.demands)
            for ell in cfg.ells:
                row = {"n": n, "rep": rep, "ell": ell}
                try:
                    report, _ = solve_instance(inst, SolveOptions(ell=ell, memory_guard=cfg.memory_guard))
                    row.update(phi=report.phi, opt_lp=report.opt_lp, fallback=report.fallback,
                               columns=report.lp_stats["solved_columns"], rows=report.lp_stats["solved_rows"],
                               x_vars=report.lp_stats["x_vars"], scope_max=report.decomposition_stats["scope_max"],
                               ms=round(sum(report.timing.values()), 1),
                               lp_ms=report.timing["solve_lp"], round_ms=report.timing["round"])
                except PipelineError as exc:
                    row.update(error=str(exc), phase=exc.phase)
                yield row


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=list(ScalingConfig.sizes))
    ap.add_argument("--ells", type=int, nargs="+", default=list(ScalingConfig.ells))
    ap.add_argument("--width", type=int, default=ScalingConfig.width)
    ap.add_argument("--per-size", type=int, default=ScalingConfig.per_size)
    ap.add_argument("--seed", type=int, default=ScalingConfig.seed)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    cfg = ScalingConfig(tuple(args.sizes), args.width, tuple(args.ells), args.per_size, seed=args.seed)
    print(json.dumps({"config": asdict(cfg)}))
    for row in run(cfg):
        print(json.dumps(row), flush=True)


if __name__ == "__main__":
    main()
