from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

import pytest

from twcut.decomposition import (GroundSetFamily, KLDecomposition, balance_tree_decomposition,
                                 build_ground_sets, build_kl_decomposition, heuristic_tree_decomposition)
from twcut.generators import random_instance
from twcut.instance import Instance, parse_instance
from twcut.lp import solve_linear_program
from twcut.oracle import mixture_lp_point
from twcut.relaxation import FractionalLP, XYSolution, build_fractional_lp, extract_solution, to_linear_program

K2_TEXT = "p sc 2 1 1\ns 0 1 5\nd 0 1 2\n"
C4_TEXT = "p sc 4 4 2\ns 0 1 1\ns 1 2 1\ns 2 3 1\ns 3 0 1\nd 0 2 1\nd 1 3 1\n"
PATH_TEXT = "p sc 3 2 1\ns 0 1 1\ns 1 2 3\nd 0 2 2\n"


@pytest.fixture
def k2() -> Instance:
    return parse_instance(K2_TEXT)


@pytest.fixture
def c4() -> Instance:
    return parse_instance(C4_TEXT)


@pytest.fixture
def path3() -> Instance:
    return parse_instance(PATH_TEXT)


@dataclass
class Case:
    inst: Instance
    kd: KLDecomposition
    gsf: GroundSetFamily
    flp: FractionalLP
    xy: XYSolution  # LP optimum
    mix: XYSolution  # fractional mixture of random cuts


def solve_case(inst: Instance, ell: int, form: str = "projected") -> tuple:
    td = balance_tree_decomposition(heuristic_tree_decomposition(inst), inst)
    kd = build_kl_decomposition(td, ell)
    gsf = build_ground_sets(kd)
    flp = build_fractional_lp(inst, gsf)
    prog = to_linear_program(flp, form)
    xy = extract_solution(flp, prog, solve_linear_program(prog.lp))
    return kd, gsf, flp, xy


def random_mixture(rng: random.Random, inst: Instance, gsf: GroundSetFamily, k: int = 3) -> XYSolution:
    while True:
        cuts = [rng.randrange(1, inst.full_mask) for _ in range(k)]
        raw = [rng.randint(1, 4) for _ in range(k)]
        weights = [Fraction(r, sum(raw)) for r in raw]
        if any(inst.crossing(c)[1] for c in cuts):
            return mixture_lp_point(inst, gsf, zip(cuts, weights))


def build_tiny_cases(count: int = 12, seed: int = 11) -> list[Case]:
    """Instances with n <= 8 whose grouped decomposition has 2 or 3 bags."""
    rng = random.Random(seed)
    out: list[Case] = []
    while len(out) < count:
        inst = random_instance(rng, rng.randint(5, 8), rng.randint(1, 2), 0.5, 3)
        for ell in (2, 3):
            td = balance_tree_decomposition(heuristic_tree_decomposition(inst), inst)
            if 2 <= len(build_kl_decomposition(td, ell).bags) <= 3:
                kd, gsf, flp, xy = solve_case(inst, ell)
                out.append(Case(inst, kd, gsf, flp, xy, random_mixture(rng, inst, gsf)))
                break
    return out


_TINY: list[Case] | None = None


@pytest.fixture(scope="session")
def tiny_cases() -> list[Case]:
    global _TINY
    if _TINY is None:
        _TINY = build_tiny_cases()
    return _TINY


# one verdict line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
ACCEPTANCE_TITLES = {
    1: "2-approximation end-to-end on the corpus",
    2: "relaxation soundness (opt_lp <= phi*, integral points feasible)",
    3: "exact marginals of the rounding distribution",
    4: "edge separation laws and Monte Carlo agreement",
    5: "nested marginalization and unit measure",
    6: "two-variable inequality on the 0.01 grid",
    7: "grouping-parameter equation and size bound",
    8: "balance and grouping contracts",
    9: "derandomization invariant and certificate",
    10: "law of total probability for conditionals",
}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (ok, detail)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {ACCEPTANCE_TITLES[criterion]} -- {detail}")


def pytest_terminal_summary(terminalreporter):
    ran = any(r.nodeid.startswith("tests/test_acceptance.py") or "test_acceptance.py" in r.nodeid
              for key in ("passed", "failed", "error") for r in terminalreporter.stats.get(key, []))
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for c, title in ACCEPTANCE_TITLES.items():
        ok, detail = ACCEPTANCE.get(c, (False, "not reached"))
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {c:>2}: {title} -- {detail}")
