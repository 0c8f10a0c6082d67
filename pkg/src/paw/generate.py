"""Seeded instance generators for experiments and tests."""

from __future__ import annotations

import random

from paw.errors import StructureError
from paw.exact import KnapsackInstance, reduce_knapsack
from paw.model import Instance


def _check_size(k: int, m: int) -> None:
    if k < 1 or m < 1:
        raise StructureError(f"need k >= 1 and m >= 1, got k = {k}, m = {m}")


def _interesting_budget(rng: random.Random, costs, m: int) -> int:
    """A budget in ``[m c_min, m c_max)`` when that range is nonempty, else ``m c_min``."""
    lo, hi = m * min(costs), m * max(costs)
    return rng.randrange(lo, hi) if hi > lo else lo


def random_instance(rng: random.Random, k: int, m: int, max_value: int = 20, max_cost: int = 10) -> Instance:
    _check_size(k, m)
    costs = tuple(rng.randint(0, max_cost) for _ in range(k))
    values = tuple(tuple(rng.randint(0, max_value) for _ in range(k)) for _ in range(m))
    return Instance(costs, values, _interesting_budget(rng, costs, m))


def unanimous_instance(rng: random.Random, k: int, m: int, max_value: int = 20, max_cost: int = 10) -> Instance:
    """Every patient shares one valuation vector."""
    _check_size(k, m)
    costs = tuple(rng.randint(0, max_cost) for _ in range(k))
    row = tuple(rng.randint(0, max_value) for _ in range(k))
    return Instance(costs, (row,) * m, _interesting_budget(rng, costs, m))


def independent_instance(rng: random.Random, k: int, m: int, max_cost: int = 10) -> Instance:
    """Values are the powers ``2^0 .. 2^(km-1)`` in random positions; all subset sums differ."""
    _check_size(k, m)
    powers = [1 << e for e in range(k * m)]
    rng.shuffle(powers)
    values = tuple(tuple(powers[j * k:(j + 1) * k]) for j in range(m))
    costs = tuple(rng.randint(0, max_cost) for _ in range(k))
    return Instance(costs, values, _interesting_budget(rng, costs, m))


def random_knapsack(rng: random.Random, items: int, max_value: int = 30, max_cost: int = 20) -> KnapsackInstance:
    if items < 1:
        raise StructureError("a knapsack needs at least one item")
    values = tuple(rng.randint(1, max_value) for _ in range(items))
    costs = tuple(rng.randint(1, max_cost) for _ in range(items))
    return KnapsackInstance(values, costs, rng.randint(0, sum(costs)))


def knapsack_instance(rng: random.Random, items: int, max_value: int = 30, max_cost: int = 20) -> Instance:
    return reduce_knapsack(random_knapsack(rng, items, max_value, max_cost))
