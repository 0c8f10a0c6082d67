import json
import warnings
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from paw.errors import ContractViolation, InputError, StructureError
from paw.model import (
    Assignment,
    Instance,
    as_fraction,
    check_equilibrium,
    check_feasible,
    derandomize,
    evaluate,
    expected_cost,
    expected_welfare,
    load_instance,
    settle_ties,
)


def test_evaluate_scarce_equilibrium(scarce):
    a = Assignment((0, 7), (1, 0, 0), (2, 1))
    report = evaluate(scarce, a)
    assert report.utilities == (3, 0, 0)
    assert report.social_welfare == 3
    assert report.total_cost == 4000
    assert check_equilibrium(scarce, a) == []


def test_all_at_expensive_hospital_is_over_budget(scarce):
    a = Assignment((0, 0), (1, 1, 1), (0, 3))
    assert not check_feasible(scarce, a)
    kinds = [v.kind for v in check_equilibrium(scarce, a)]
    assert kinds == ["budget"]


def test_envy_and_negative_utility_reported(scarce):
    a = Assignment((0, 8), (1, 1, 0), (1, 2))
    found = {(v.kind, v.patient) for v in check_equilibrium(scarce, a)}
    assert ("negative-utility", 1) in found
    assert ("envy", 1) in found


def test_deficit_feasibility(scarce):
    a = Assignment((0, 3), (1, 1, 0), (1, 2))  # cost 6500
    assert not check_feasible(scarce, a)
    assert check_feasible(scarce, a, Fraction(11, 10))


def test_quota_mismatch_rejected():
    with pytest.raises(StructureError):
        Assignment((0, 0), (0, 1), (2, 0))


def test_negative_value_rejected():
    with pytest.raises(StructureError):
        Instance((1,), ((-1,),), 1)


@given(st.lists(st.integers(0, 20), min_size=2, max_size=2), st.integers(1, 5))
def test_welfare_is_linear_in_values(row, scale):
    inst = Instance((1, 2), (tuple(row), tuple(reversed(row))), 4)
    big = Instance((1, 2), tuple(tuple(scale * v for v in r) for r in inst.values), 4)
    a = Assignment((1, 0), (0, 1), (1, 1))
    b = Assignment((scale, 0), (0, 1), (1, 1))
    assert evaluate(big, b).social_welfare == scale * evaluate(inst, a).social_welfare


def test_settle_ties_prefers_cheaper(correlated):
    _, swapped = correlated
    a = Assignment((4, 0), (0, 1), (1, 1))
    out = settle_ties(swapped, a)
    # patient 0 is indifferent between 10-4 and 6-0 and moves to the cheap hospital
    assert out.assignment == (1, 1)
    assert evaluate(swapped, out).social_welfare == evaluate(swapped, a).social_welfare


def test_derandomize_keeps_welfare_and_cost_bound(correlated):
    _, swapped = correlated
    w = (4, 0)
    frac = [[Fraction(1, 2), Fraction(1, 2)], [Fraction(1, 3), Fraction(2, 3)]]
    a = derandomize(swapped, frac, w)
    assert evaluate(swapped, a).social_welfare == expected_welfare(swapped, frac, w)
    assert evaluate(swapped, a).total_cost <= expected_cost(swapped, frac)


def test_derandomize_rejects_suboptimal_support(scarce):
    with pytest.raises(ContractViolation):
        derandomize(scarce, [[1, 0], [1, 0], [0, 1]], (0, 7))


def test_as_fraction_exactness():
    assert as_fraction("3/4") == Fraction(3, 4)
    assert as_fraction(0.1) == Fraction(1, 10)
    with pytest.raises(TypeError):
        as_fraction(True)


def test_dict_roundtrip_with_counts(tmp_path):
    data = {
        "hospitals": [{"name": "cheap", "cost": 500}, {"name": "mri", "cost": 3000}],
        "patients": [{"name": "a", "values": [0, 10]}, {"values": [0, 3], "count": 2}],
        "budget": 6000,
    }
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(data))
    inst = load_instance(path)
    assert inst.m == 3
    assert inst.values[2] == (0, 3)
    assert Instance.from_dict(inst.to_dict()) == inst


def test_uninteresting_budget_warns():
    data = {"hospitals": [{"cost": 1}, {"cost": 2}], "patients": [{"values": [1, 2]}], "budget": 5}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        Instance.from_dict(data)
    assert caught


@pytest.mark.parametrize(
    "text",
    ["{", "[]", '{"hospitals": [], "patients": [], "budget": 1}', '{"hospitals": [{"cost": -1}], "patients": [{"values": [1]}], "budget": 1}'],
)
def test_malformed_input(tmp_path, text):
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises((InputError, StructureError)):
        load_instance(path)


def test_assignment_dict_roundtrip():
    a = Assignment((Fraction(7, 2), 0), (0, 1), (1, 1))
    assert Assignment.from_dict(json.loads(json.dumps(a.to_dict()))) == a
