from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from twcut.instance import (Cut, Instance, InstanceError, merge_parallel, parse_instance,
                            serialize_instance, sparsity)

from conftest import C4_TEXT, K2_TEXT


def test_parse_k2(k2):
    assert k2.n == 2
    assert k2.supply == ((0, 1, 5),)
    assert k2.demand == ((0, 1, 2),)


def test_self_loop_reports_line():
    with pytest.raises(InstanceError) as err:
        parse_instance("p sc 2 1 1\ns 0 0 1\nd 0 1 1\n")
    assert err.value.line == 2


def test_c4_counts(c4):
    assert len(c4.supply) == 4 and len(c4.demand) == 2


@pytest.mark.parametrize("text, line", [
    ("s 0 1 1\n", 1),
    ("p sc 2 1 1\ns 0 1 0\nd 0 1 1\n", 2),
    ("p sc 2 1 1\ns 0 2 1\nd 0 1 1\n", 2),
    ("p sc 2 2 1\ns 0 1 1\ns 1 0 2\nd 0 1 1\n", 3),
    ("p sc 2 1 1\nx 0 1 1\n", 2),
    ("p sc 2 1 1\ns 0 1 a\n", 2),
])
def test_malformed_lines(text, line):
    with pytest.raises(InstanceError) as err:
        parse_instance(text)
    assert err.value.line == line


def test_header_count_mismatch():
    with pytest.raises(InstanceError, match="declares 2 supply"):
        parse_instance("p sc 3 2 1\ns 0 1 1\nd 0 1 1\n")


def test_empty_demand_rejected():
    with pytest.raises(InstanceError):
        parse_instance("p sc 2 1 0\ns 0 1 1\n")


def test_sparsity_examples(k2, c4, path3):
    assert sparsity(k2, [0]) == Fraction(5, 2)
    assert sparsity(c4, [0, 1]) == 1
    assert sparsity(path3, [1]) is None
    assert Cut.of(path3, [1]).phi is None


def test_sparsity_rejects_trivial(k2):
    with pytest.raises(InstanceError):
        sparsity(k2, [])
    with pytest.raises(InstanceError):
        sparsity(k2, [0, 1])


def test_merge_parallel():
    assert merge_parallel([(1, 0, 2), (0, 1, 3), (1, 2, 1)]) == [(0, 1, 5), (1, 2, 1)]


@st.composite
def instances(draw):
    n = draw(st.integers(2, 9))
    pairs = st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda p: p[0] != p[1])
    def edges(min_size):
        return st.dictionaries(pairs.map(lambda p: (min(p), max(p))), st.integers(1, 20), min_size=min_size)
    sup = draw(edges(0))
    dem = draw(edges(1))
    return Instance(n, tuple((u, v, w) for (u, v), w in sup.items()),
                    tuple((u, v, w) for (u, v), w in dem.items()))


@given(instances())
def test_round_trip(inst):
    assert parse_instance(serialize_instance(inst)) == inst


@given(instances(), st.data())
def test_sparsity_symmetric(inst, data):
    mask = data.draw(st.integers(1, inst.full_mask - 1)) if inst.n > 1 else 1
    assert sparsity(inst, mask) == sparsity(inst, inst.full_mask ^ mask)


def test_serialize_is_whitespace_insensitive():
    messy = "  p  sc 2 1 1 \n\n s 0 1 5\n  d 0   1 2\n"
    assert serialize_instance(parse_instance(messy)) == K2_TEXT
    assert parse_instance(C4_TEXT) == parse_instance(serialize_instance(parse_instance(C4_TEXT)))
