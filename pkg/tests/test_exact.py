import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import correlated_instance
from paw.errors import CapExceeded, InfeasibleBudget
from paw.exact import (
    KnapsackInstance,
    brute_force_oracle,
    count_quota_vectors,
    knapsack_optimum,
    min_waiting_times,
    oracle_by_quotas,
    reduce_knapsack,
    solve_exact,
)
from paw.generate import random_instance, random_knapsack, unanimous_instance
from paw.matching import assignment_for_quotas
from paw.model import Instance, check_equilibrium, evaluate


def test_scarce_example(scarce):
    a, report = solve_exact(scarce)
    assert a.waiting_times == (0, 7)
    assert report.social_welfare == 3
    assert brute_force_oracle(scarce) == 3


@pytest.mark.parametrize("swapped, waits, welfare", [(False, (0, 0), 16), (True, (4, 0), 6)])
def test_correlated_examples(swapped, waits, welfare):
    inst = correlated_instance(10, swapped)
    a, report = solve_exact(inst)
    assert a.waiting_times == waits
    assert report.social_welfare == welfare
    assert check_equilibrium(inst, a) == []


@pytest.mark.parametrize("budget", [3, 10, 50, 1000])
def test_correlated_examples_any_large_budget(budget):
    assert solve_exact(correlated_instance(budget, False))[1].social_welfare == 16
    assert solve_exact(correlated_instance(budget, True))[1].social_welfare == 6


def test_quota_vector_count():
    assert count_quota_vectors(3, 2) == 4
    brute = sum(1 for q in itertools.product(range(5), repeat=3) if sum(q) == 4)
    assert count_quota_vectors(4, 3) == brute


def test_cap_and_infeasible_budget(scarce):
    with pytest.raises(CapExceeded, match="approximate"):
        solve_exact(scarce, cap=2)
    with pytest.raises(InfeasibleBudget):
        solve_exact(Instance((2, 3), ((1, 1),), 1))


@pytest.mark.parametrize("seed", range(60))
def test_agrees_with_oracle(seed):
    rng = random.Random(seed)
    inst = random_instance(rng, rng.randint(1, 3), rng.randint(1, 5))
    a, report = solve_exact(inst)
    assert report.social_welfare == brute_force_oracle(inst)
    assert check_equilibrium(inst, a) == []
    assert all(w.denominator == 1 for w in a.waiting_times)


@pytest.mark.parametrize("seed", range(20))
def test_bidder_optimal_dominates_every_equilibrium_with_same_quotas(seed):
    rng = random.Random(1000 + seed)
    inst = random_instance(rng, rng.randint(1, 3), rng.randint(1, 5))
    for quotas, sw in oracle_by_quotas(inst).items():
        a = assignment_for_quotas(inst, quotas)
        assert evaluate(inst, a).social_welfare >= sw


def test_min_waiting_times_detects_impossible_assignment(scarce):
    # patient 0 (value 10) at the free hospital while patient 2 (value 3) is served
    assert min_waiting_times(scarce, (0, 1, 1)) is None
    assert min_waiting_times(scarce, (1, 0, 0)) == (0, 7)


@given(st.integers(0, 10**9), st.integers(1, 3), st.integers(1, 5))
def test_unanimous_patients_pick_one_hospital_value(seed, k, m):
    """With identical patients every equilibrium utility is equal, so SW is m times it."""
    inst = unanimous_instance(random.Random(seed), k, m)
    a, report = solve_exact(inst)
    assert len(set(report.utilities)) == 1
    assert report.social_welfare == brute_force_oracle(inst)


@pytest.mark.parametrize("seed", range(30))
def test_knapsack_reduction(seed):
    rng = random.Random(seed)
    kp = random_knapsack(rng, rng.randint(1, 8))
    inst = reduce_knapsack(kp)
    assert solve_exact(inst)[1].social_welfare == knapsack_optimum(kp)


def test_knapsack_small_by_hand():
    kp = KnapsackInstance((6, 5, 5), (4, 3, 3), 6)
    assert knapsack_optimum(kp) == 10
    a, report = solve_exact(reduce_knapsack(kp))
    assert report.social_welfare == 10
    assert KnapsackInstance.from_dict(kp.to_dict()) == kp


@pytest.mark.parametrize("seed", range(10))
def test_fractional_equilibria_do_not_beat_integral(seed):
    """Mixing the supports of two equilibria at the same waits never exceeds the optimum."""
    rng = random.Random(seed)
    inst = random_instance(rng, 2, rng.randint(1, 4))
    a, report = solve_exact(inst)
    w = a.waiting_times
    for j in range(inst.m):
        best = max(v - x for v, x in zip(inst.values[j], w))
        assert report.utilities[j] == best
    assert report.social_welfare <= inst.max_social_welfare
    assert report.total_cost <= inst.budget
    assert isinstance(report.social_welfare, Fraction)


@pytest.mark.parametrize(
    "kp, expected",
    [
        (KnapsackInstance((6, 5), (3, 3), 3), 6),
        (KnapsackInstance((6, 5), (3, 3), 0), 0),
        (KnapsackInstance((6, 5, 2), (3, 3, 1), 7), 13),
    ],
)
def test_knapsack_examples(kp, expected):
    inst = reduce_knapsack(kp)
    assert (inst.k, inst.m) == (len(kp.values) + 1, len(kp.values))
    assert knapsack_optimum(kp) == expected
    assert solve_exact(inst)[1].social_welfare == expected
    assert brute_force_oracle(inst) == expected


def test_unanimous_optimum_is_best_affordable_value():
    # every patient values (2, 9, 6); hospital 1 is unaffordable for all three
    inst = Instance((0, 5, 2), ((2, 9, 6),) * 3, 8)
    assert solve_exact(inst)[1].social_welfare == 3 * 6
