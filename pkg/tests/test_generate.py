import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import independent_by_definition
from paw.errors import StructureError
from paw.generate import (
    independent_instance,
    knapsack_instance,
    random_instance,
    random_knapsack,
    unanimous_instance,
)

sizes = st.tuples(st.integers(0, 10**9), st.integers(1, 4), st.integers(1, 6))


@given(sizes)
def test_random_instance_is_interesting_when_costs_differ(args):
    seed, k, m = args
    inst = random_instance(random.Random(seed), k, m)
    if len(set(inst.hospital_costs)) > 1:
        assert inst.interesting
    else:
        assert inst.budget == m * inst.hospital_costs[0]


@given(sizes)
def test_generators_are_seeded(args):
    seed, k, m = args
    for gen in (random_instance, unanimous_instance, independent_instance):
        assert gen(random.Random(seed), k, m) == gen(random.Random(seed), k, m)


@given(st.integers(0, 10**9), st.integers(1, 3), st.integers(1, 5))
def test_independent_generator(seed, k, m):
    assert independent_by_definition(independent_instance(random.Random(seed), k, m))


def test_unanimous_rows_equal():
    inst = unanimous_instance(random.Random(3), 3, 4)
    assert len(set(inst.values)) == 1


def test_knapsack_shapes():
    kp = random_knapsack(random.Random(1), 6)
    assert 0 <= kp.budget <= sum(kp.costs)
    inst = knapsack_instance(random.Random(1), 6)
    assert inst.k == 7 and inst.m == 6
    assert inst.hospital_costs[-1] == 0


def test_sizes_validated():
    with pytest.raises(StructureError):
        random_instance(random.Random(0), 0, 3)
    with pytest.raises(StructureError):
        random_knapsack(random.Random(0), 0)
