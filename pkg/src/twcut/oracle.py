"""Brute-force references: exact sparsest cut, integral LP points, and the
exact output distribution of the top-down sampler."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .bits import members, submasks
from .decomposition import GroundSetFamily, KLDecomposition
from .instance import Cut, Instance
from .relaxation import FractionalLP, XYSolution
from .rounding import bag_distribution

MAX_EXACT_NODES = 24
MAX_ENUMERATION_BITS = 20


class OracleError(RuntimeError):
    pass


def _crossing_table(n: int, edges, masks: np.ndarray) -> np.ndarray:
    total = np.zeros(masks.shape, dtype=np.int64)
    for u, v, w in edges:
        total += w * (((masks >> u) ^ (masks >> v)) & 1)
    return total


def exact_sparsest_cut(inst: Instance) -> tuple[Cut, Fraction]:
    """Minimum defined sparsity over all proper cuts; node 0 stays inside ``S``.

    Ties go to the lexicographically smallest sorted member list.
    """
    n = inst.n
    if n > MAX_EXACT_NODES:
        raise OracleError(f"exact enumeration limited to n <= {MAX_EXACT_NODES}, got {n}")
    if n < 2:
        raise OracleError("no proper cut exists")
    # S = {0} | (bits of m shifted up by one), for m over all but the full mask
    rest = np.arange((1 << (n - 1)) - 1, dtype=np.int64)
    masks = (rest << 1) | 1
    cap = _crossing_table(n, inst.supply, masks)
    dem = _crossing_table(n, inst.demand, masks)
    ok = dem > 0
    if not ok.any():
        raise OracleError("no cut separates any demand")
    idx = np.flatnonzero(ok)
    ratio = cap[idx] / dem[idx]
    best = ratio.min()
    near = idx[ratio <= best * (1 + 1e-9) + 1e-12]
    winner = min(near, key=lambda i: (Fraction(int(cap[i]), int(dem[i])), members(int(masks[i]))))
    cut = Cut.of(inst, members(int(masks[winner])))
    return cut, cut.phi


@dataclass(frozen=True)
class IntegralPoint:
    """The LP point of a fixed cut: ``x(S, A) = [A == C & S]``, ``y`` = separation."""

    cut: int

    def x(self, s: int, a: int) -> Fraction:
        return Fraction(int(a == (self.cut & s)))

    def y(self, u: int, v: int) -> Fraction:
        return Fraction((self.cut >> u & 1) ^ (self.cut >> v & 1))

    def solution(self, gsf: GroundSetFamily, inst: Instance) -> XYSolution:
        dists = {g: {self.cut & g: Fraction(1)} for g in gsf.maximal}
        xy = XYSolution(gsf, dists, Fraction(0))
        num, den = xy.ratio(inst)
        xy.opt_lp = num / den if den else Fraction(0)
        return xy


def integral_lp_point(inst: Instance, gsf: GroundSetFamily, cut) -> IntegralPoint:
    mask = cut if isinstance(cut, int) else sum(1 << v for v in cut)
    if mask & ~inst.full_mask:
        raise ValueError("cut contains nodes outside the instance")
    return IntegralPoint(mask)


def point_violations(flp: FractionalLP, x_of, y_of) -> list[tuple[str, dict, int]]:
    """Rows of the full system that the assignment fails, in exact arithmetic."""
    bad = []
    for kind, terms, rhs in flp.iter_rows():
        total = Fraction(0)
        for key, c in terms.items():
            total += c * (x_of(key[1], key[2]) if key[0] == "x" else y_of(key[1], key[2]))
        if total != rhs:
            bad.append((kind, terms, rhs))
    for s in flp.closure:
        for a in submasks(s):
            if x_of(s, a) < 0:
                bad.append(("nonnegative", {("x", s, a): 1}, 0))
    return bad


def _local_to_global(sets: np.ndarray, k: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Row ``i`` lists every submask of ``sets[i]`` (``k`` bits) by local index; also each member's bit."""
    bits, rest = [], sets.copy()
    for _ in range(k):
        low = rest & -rest
        bits.append(low)
        rest ^= low
    idx = np.arange(1 << k, dtype=np.int64)
    glob = np.zeros((len(sets), 1 << k), dtype=np.int64)
    for j, b in enumerate(bits):
        glob |= ((idx >> j) & 1)[None, :] * b[:, None]
    return glob, bits


def integral_point_violations(flp: FractionalLP, cut: int) -> dict[str, int]:
    """Violated rows of the full system at the integral point of ``cut``, per row kind.

    Same rows as :func:`point_violations`, evaluated in integer numpy arrays
    with the sets grouped by size; usable on systems with millions of rows.
    """
    bad = {"cut_indicator": 0, "measure": 0, "consistency": 0}
    for u, v in flp.pairs:
        side_u, side_v = cut >> u & 1, cut >> v & 1
        # x(e,{u}) + x(e,{v}) - y
        if int(side_u and not side_v) + int(side_v and not side_u) - (side_u ^ side_v):
            bad["cut_indicator"] += 1
    by_size: dict[int, list[int]] = {}
    for s in flp.closure:
        by_size.setdefault(bin(s).count("1"), []).append(s)
    for k, group in by_size.items():
        sets = np.array(group, dtype=np.int64)
        glob, bits = _local_to_global(sets, k)
        target = (cut & sets)[:, None]
        x = (glob == target).astype(np.int64)
        bad["measure"] += int(np.count_nonzero(x.sum(axis=1) != 1))
        idx = np.arange(1 << k)
        for j, b in enumerate(bits):
            lo = idx[(idx >> j & 1) == 0]
            a = glob[:, lo]
            x_small = (a == (cut & (sets ^ b))[:, None]).astype(np.int64)
            resid = x[:, lo] + x[:, lo | (1 << j)] - x_small
            bad["consistency"] += int(np.count_nonzero(resid))
    return bad


@dataclass(frozen=True)
class OutcomeDistribution:
    outcomes: dict[int, Fraction]

    def __post_init__(self):
        if sum(self.outcomes.values()) != 1:
            raise OracleError("outcome probabilities do not sum to 1")

    def marginal(self, s: int) -> dict[int, Fraction]:
        out: dict[int, Fraction] = {}
        for b, p in self.outcomes.items():
            out[b & s] = out.get(b & s, Fraction(0)) + p
        return out

    def probability(self, event) -> Fraction:
        return sum((p for b, p in self.outcomes.items() if event(b)), Fraction(0))

    def separation(self, u: int, v: int) -> Fraction:
        return self.probability(lambda b: (b >> u & 1) != (b >> v & 1))


def enumerate_rounding_distribution(xy: XYSolution, kd: KLDecomposition) -> OutcomeDistribution:
    """Every branch of the sampler with its exact probability, merged by outcome."""
    bits = sum(bin(m).count("1") for m in kd.new_mask)
    if bits > MAX_ENUMERATION_BITS:
        raise OracleError(f"state space 2^{bits} exceeds the 2^{MAX_ENUMERATION_BITS} guard")
    outcomes: dict[int, Fraction] = {}

    def walk(bag: int, result: int, prob: Fraction):
        if bag == len(kd.bags):
            outcomes[result] = outcomes.get(result, Fraction(0)) + prob
            return
        cond = 0 if kd.parent[bag] == -1 else result & kd.prefix_mask[bag]
        for a, w in sorted(bag_distribution(xy, kd, bag, cond).weights.items()):
            if w:
                walk(bag + 1, result | a, prob * w)

    walk(0, 0, Fraction(1))
    return OutcomeDistribution(outcomes)


def mixture_lp_point(inst: Instance, gsf: GroundSetFamily, weighted_cuts) -> XYSolution:
    """LP point of a convex combination of cuts; ``opt_lp`` is set to its ratio.

    Marginals of one global distribution are consistent everywhere, so the
    point is feasible for the homogenized program after scaling.
    """
    weighted_cuts = [(int(m), Fraction(w)) for m, w in weighted_cuts]
    if sum(w for _, w in weighted_cuts) != 1 or any(w < 0 for _, w in weighted_cuts):
        raise ValueError("weights must be nonnegative and sum to 1")
    dists: dict[int, dict[int, Fraction]] = {}
    for g in gsf.maximal:
        d: dict[int, Fraction] = {}
        for m, w in weighted_cuts:
            if w:
                d[m & g] = d.get(m & g, Fraction(0)) + w
        dists[g] = d
    xy = XYSolution(gsf, dists, Fraction(0))
    num, den = xy.ratio(inst)
    if den == 0:
        raise OracleError("mixture separates no demand")
    xy.opt_lp = num / den
    return xy
