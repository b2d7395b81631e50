import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from twcut.bits import mask_of, submasks
from twcut.decomposition import KLDecomposition, build_ground_sets
from twcut.instance import Instance
from twcut.oracle import (enumerate_rounding_distribution, exact_sparsest_cut, integral_lp_point,
                          mixture_lp_point)
from twcut.rounding import (ConditionalProbabilities, RoundingError, bag_distribution, derandomize,
                            fallback_cut, gamma_expectation, h_extensions,
                            is_degenerate, iter_prefix_assignments, randomized_round)

from conftest import random_mixture, solve_case

# bags: 0 {0,1,2}; 1 {1,2,3} < 0; 2 {0,4} < 0; 3 {2,3,5,6} < 1; 4 {3,6,7} < 3
SYNTH = KLDecomposition(
    (frozenset({0, 1, 2}), frozenset({1, 2, 3}), frozenset({0, 4}), frozenset({2, 3, 5, 6}), frozenset({3, 6, 7})),
    (-1, 0, 0, 1, 3), 2, 3, 3)


def brute_extensions(kd, h, u, z):
    x = kd.top_bag[u]
    vx = kd.prefix_mask[x]
    base = 0 if z is None else kd.scope_mask[z]
    ms = {(h & vx) | l for l in submasks(vx & ~base)}
    out = []
    for m in submasks(vx | base):
        for n in submasks(kd.bag_mask[x] | vx):
            cond_i = n & ~(kd.bag_mask[x] & ~vx) == 0 and n >> u & 1
            if cond_i and m in ms:
                out.append((m, n))
    return sorted(out)


def test_h_extensions_match_brute_force():
    kd = SYNTH
    checked = 0
    for u in range(8):
        top = kd.top_bag[u]
        for z in (None,) + kd.root_path[top]:
            base = 0 if z is None else kd.scope_mask[z]
            for h in submasks(base):
                assert h_extensions(kd, h, u, z).pairs == tuple(brute_extensions(kd, h, u, z))
                checked += 1
    assert checked > 50


def test_h_extensions_root_specialization():
    ext = h_extensions(SYNTH, 0b011, 0, 0)
    assert all(m == 0 for m, _ in ext.pairs)
    assert sorted(n for _, n in ext.pairs) == [n for n in submasks(0b111) if n & 1]


def test_h_extensions_child_has_empty_l_space():
    # X = bag 3, Z = bag 1: V^3 = {1,2}|{2,3} is inside V^1 | Y_1
    ext = h_extensions(SYNTH, mask_of({2, 3}), 5, 1)
    new = SYNTH.bag_mask[3] & ~SYNTH.prefix_mask[3]
    assert len(ext) == 2 ** (bin(new).count("1") - 1)
    assert len({m for m, _ in ext.pairs}) == 1


def test_h_extensions_off_path():
    with pytest.raises(ValueError):
        h_extensions(SYNTH, 0, 4, 1)


def test_root_distribution_k2(k2):
    kd, gsf, flp, xy = solve_case(k2, 2)
    dist = bag_distribution(xy, kd, 0)
    assert dist.weights == xy.marginal(kd.bag_mask[0])
    assert sum(dist.weights.values()) == 1


def test_empty_new_set_is_point_mass():
    kd = KLDecomposition((frozenset({0, 1, 2}), frozenset({1, 2})), (-1, 0), 2, 2, 1)
    inst = Instance(3, ((0, 1, 1), (1, 2, 1)), ((0, 2, 1),))
    xy = mixture_lp_point(inst, build_ground_sets(kd), [(0b001, Fraction(1, 2)), (0b110, Fraction(1, 2))])
    assert bag_distribution(xy, kd, 1, 0b110).weights == {0: 1}


@pytest.mark.parametrize("cut", [0b0011, 0b0101, 0b1000])
def test_integral_point_is_reproduced(c4, cut):
    kd, gsf, _, _ = solve_case(c4, 2)
    xy = integral_lp_point(c4, gsf, cut).solution(gsf, c4)
    assert bag_distribution(xy, kd, 0).weights == {cut & kd.bag_mask[0]: 1}
    for seed in range(5):
        assert randomized_round(xy, kd, seed).result == cut
    if c4.crossing(cut)[1]:
        assert derandomize(c4, xy, kd).members == cut


def test_seed_reproducible(tiny_cases):
    case = tiny_cases[0]
    a = [randomized_round(case.mix, case.kd, s).result for s in range(30)]
    b = [randomized_round(case.mix, case.kd, s).result for s in range(30)]
    assert a == b


def test_derandomize_k2(k2):
    kd, _, _, xy = solve_case(k2, 2)
    out = derandomize(k2, xy, kd)
    assert out.members in (0b01, 0b10) and out.invariant_held


def test_derandomize_c4(c4):
    kd, _, _, xy = solve_case(c4, 2)
    out = derandomize(c4, xy, kd)
    cap, dem = c4.crossing(out.members)
    assert dem and Fraction(cap, dem) <= 2


def k2m(m):
    leaves = range(2, m + 2)
    return Instance(m + 2, tuple((h, v, 1) for h in (0, 1) for v in leaves),
                    tuple((u, v, 1) for u, v in itertools.combinations(leaves, 2)))


@pytest.mark.parametrize("m", [4, 6])
def test_bipartite_all_pairs_within_factor_two(m):
    inst = k2m(m)
    kd, _, _, xy = solve_case(inst, 2)
    out = derandomize(inst, xy, kd)
    cap, dem = inst.crossing(out.members)
    _, phi = exact_sparsest_cut(inst)
    assert out.invariant_held and xy.opt_lp <= phi
    assert Fraction(cap, dem) <= 2 * xy.opt_lp


def test_methods_agree(tiny_cases):
    for case in tiny_cases[:6]:
        xy = case.mix
        fast = ConditionalProbabilities(xy, case.kd, "marginal")
        slow = ConditionalProbabilities(xy, case.kd, "extensions")
        for t in range(len(case.kd.bags) + 1):
            for assignment, _ in iter_prefix_assignments(case.kd, xy, t):
                for u, v, _ in case.inst.supply + case.inst.demand:
                    assert fast.separation(u, v, t, assignment) == slow.separation(u, v, t, assignment)


def test_conditionals_match_enumeration(tiny_cases):
    for case in tiny_cases:
        xy, kd = case.mix, case.kd
        dist = enumerate_rounding_distribution(xy, kd)
        cp = ConditionalProbabilities(xy, kd)
        for t in range(len(kd.bags) + 1):
            cov = cp.covered[t]
            for assignment, prob in iter_prefix_assignments(kd, xy, t):
                assert dist.probability(lambda b: b & cov == assignment) == prob
                for u, v, _ in case.inst.supply + case.inst.demand:
                    joint = dist.probability(lambda b: b & cov == assignment and (b >> u & 1) != (b >> v & 1))
                    assert joint / prob == cp.separation(u, v, t, assignment)


def test_empty_prefix_supply_edge_is_y(tiny_cases):
    for case in tiny_cases:
        cp = ConditionalProbabilities(case.mix, case.kd)
        for u, v, _ in case.inst.supply:
            assert cp.separation(u, v, 0, 0) == case.mix.y(u, v)


def test_gamma_nonpositive_on_mixtures(tiny_cases):
    for case in tiny_cases:
        cp = ConditionalProbabilities(case.mix, case.kd)
        assert gamma_expectation(case.inst, cp, case.mix.opt_lp, 0, 0) <= 0
        out = derandomize(case.inst, case.mix, case.kd)
        assert out.invariant_held
        cap, dem = case.inst.crossing(out.members)
        assert cap <= 2 * case.mix.opt_lp * dem


def test_derandomize_raises_on_wrong_bound(c4):
    kd, _, _, xy = solve_case(c4, 2)
    with pytest.raises(RoundingError):
        derandomize(c4, xy, kd, opt_lp=Fraction(1, 10))


def test_fallback_picks_best_defined_cut(c4):
    kd, gsf, _, xy = solve_case(c4, 2)
    mask, source = fallback_cut(c4, xy, kd, seed=1)
    assert not is_degenerate(c4, mask)
    cap, dem = c4.crossing(mask)
    assert Fraction(cap, dem) == 1 and source in ("single-node", "sample")


def test_degenerate_detection(c4):
    assert is_degenerate(c4, 0) and is_degenerate(c4, 0b1111)
    assert is_degenerate(c4, 0b0101)  # no demand crosses: {0,2} and {1,3} kept together
    assert not is_degenerate(c4, 0b0011)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32))
def test_random_mixture_rounding(seed):
    from twcut.generators import random_instance
    rng = random.Random(seed)
    inst = random_instance(rng, rng.randint(4, 7), rng.randint(1, 2), 0.5, 3)
    kd, gsf, _, _ = solve_case(inst, rng.choice((2, 3)))
    xy = random_mixture(rng, inst, gsf, k=rng.randint(2, 4))
    dist = enumerate_rounding_distribution(xy, kd)
    for u, v, _ in inst.supply:
        assert dist.separation(u, v) == xy.y(u, v)
    for u, v, _ in inst.demand:
        assert 2 * dist.separation(u, v) >= xy.y(u, v)
    out = derandomize(inst, xy, kd)
    assert out.invariant_held
