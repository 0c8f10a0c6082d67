"""Exact optimal equilibrium assignments for small instances.

Two independent routes to the optimum welfare:

* :func:`solve_exact` enumerates budget-feasible quota vectors and takes the
  bidder-optimal matching for each one (the welfare-maximizing equilibrium
  with those quotas).
* :func:`brute_force_oracle` enumerates every assignment function and finds
  the cheapest equilibrium waiting times for it by solving a system of
  difference constraints with Bellman-Ford.

The knapsack reduction lives here too, since its tests are driven by these
solvers.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

from paw.errors import CapExceeded, InfeasibleBudget, InputError, InvariantFailure, StructureError
from paw.matching import assignment_for_quotas
from paw.model import Assignment, Instance, WelfareReport, check_equilibrium, evaluate, settle_ties

DEFAULT_EXACT_CAP = 10**7
DEFAULT_ORACLE_CAP = 10**6


def count_quota_vectors(m: int, k: int) -> int:
    """Number of ways to split ``m`` patients over ``k`` hospitals."""
    return math.comb(m + k - 1, k - 1)


def _support_upper_bound(instance: Instance, support: Sequence[int]) -> int:
    return sum(max(row[i] for i in support) for row in instance.values)


def _min_cost(instance: Instance, support: Sequence[int]) -> int:
    c = instance.hospital_costs
    return sum(c[i] for i in support) + (instance.m - len(support)) * min(c[i] for i in support)


def _vectors_on_support(instance: Instance, support: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """Quota vectors positive exactly on ``support``, summing to m, within budget."""
    c = instance.hospital_costs
    k, m, budget = instance.k, instance.m, instance.budget
    order = sorted(support)
    # cheapest completion for the hospitals still to be filled
    tail_min = [0] * (len(order) + 1)
    for t in range(len(order) - 1, -1, -1):
        rest = order[t:]
        tail_min[t] = min(c[i] for i in rest)
    vec = [0] * k

    def rec(t, left, spent):
        i = order[t]
        if t == len(order) - 1:
            if spent + left * c[i] <= budget:
                vec[i] = left
                yield tuple(vec)
                vec[i] = 0
            return
        slots_after = len(order) - t - 1
        for q in range(1, left - slots_after + 1):
            cost = spent + q * c[i]
            rest = left - q
            # at least one per later hospital, the remainder at the cheapest one
            if cost + sum(c[x] for x in order[t + 1:]) + (rest - slots_after) * tail_min[t + 1] > budget:
                continue
            vec[i] = q
            yield from rec(t + 1, rest, cost)
        vec[i] = 0

    yield from rec(0, m, 0)


def solve_exact(instance: Instance, cap: int = DEFAULT_EXACT_CAP) -> tuple[Assignment, WelfareReport]:
    """Optimal equilibrium assignment under budget B.

    Quota vectors are grouped by support; a support whose optimistic welfare
    (everyone at their favourite funded hospital with no wait) is below the best
    welfare found so far is skipped.  Among optimal vectors the
    lexicographically smallest wins.  Patients indifferent between hospitals
    are finally moved to the cheapest one, which keeps welfare and can only
    lower the cost.
    """
    total = count_quota_vectors(instance.m, instance.k)
    if total > cap:
        raise CapExceeded(
            f"instance too large for the exact solver: {total} quota vectors exceed cap {cap}; "
            "use the approximate solver"
        )
    if instance.m * min(instance.hospital_costs) > instance.budget:
        raise InfeasibleBudget("budget cannot pay for every patient even at the cheapest hospital")

    supports = []
    for size in range(1, min(instance.k, instance.m) + 1):
        for s in itertools.combinations(range(instance.k), size):
            if _min_cost(instance, s) <= instance.budget:
                supports.append((_support_upper_bound(instance, s), s))
    supports.sort(key=lambda t: (-t[0], t[1]))

    best_sw: Fraction | None = None
    winners: list[tuple[tuple[int, ...], Assignment]] = []
    for bound, support in supports:
        if best_sw is not None and bound < best_sw:
            break
        for quotas in _vectors_on_support(instance, support):
            a = assignment_for_quotas(instance, quotas)
            sw = evaluate(instance, a).social_welfare
            if best_sw is None or sw > best_sw:
                best_sw, winners = sw, [(quotas, a)]
            elif sw == best_sw:
                winners.append((quotas, a))
    if not winners:
        raise InvariantFailure("no budget-feasible quota vector although m*c_min <= B")

    _, chosen = min(winners, key=lambda t: t[0])
    chosen = settle_ties(instance, chosen)
    report = evaluate(instance, chosen)
    bad = check_equilibrium(instance, chosen)
    if bad or report.social_welfare != best_sw:
        raise InvariantFailure(f"exact solver output is not an optimal equilibrium: {bad}")
    if any(w.denominator != 1 for w in chosen.waiting_times):
        raise InvariantFailure("exact solver produced non-integer waiting times")
    return chosen, report


def min_waiting_times(instance: Instance, assignment: Sequence[int]) -> tuple[int, ...] | None:
    """Componentwise-smallest waiting times making ``assignment`` an equilibrium.

    Solves ``w_h(j) - w_i <= v_h(j)j - v_ij``, ``w_h(j) <= v_h(j)j`` and
    ``w >= 0`` as shortest paths in ``y = -w`` from an extra zero node.
    Returns ``None`` when the system has no solution (a negative cycle).
    """
    k = instance.k
    zero = k
    edges = [(zero, i, 0) for i in range(k)]
    for j, a in enumerate(assignment):
        row = instance.values[j]
        edges.append((a, zero, row[a]))
        for i in range(k):
            if i != a:
                edges.append((a, i, row[a] - row[i]))
    dist = [None] * (k + 1)
    dist[zero] = 0
    for _ in range(k + 1):
        changed = False
        for u, v, wt in edges:
            if dist[u] is not None and (dist[v] is None or dist[u] + wt < dist[v]):
                dist[v] = dist[u] + wt
                changed = True
        if not changed:
            break
    else:
        return None
    if dist[zero] != 0:
        return None
    return tuple(-d for d in dist[:k])


def oracle_by_quotas(instance: Instance, cap: int = DEFAULT_ORACLE_CAP) -> dict[tuple[int, ...], int]:
    """Best equilibrium welfare for every quota vector reachable by some assignment.

    Budget is ignored here; callers filter by cost.
    """
    k, m = instance.k, instance.m
    if k**m > cap:
        raise CapExceeded(f"{k}^{m} assignment functions exceed oracle cap {cap}")
    best: dict[tuple[int, ...], int] = {}
    for h in itertools.product(range(k), repeat=m):
        w = min_waiting_times(instance, h)
        if w is None:
            continue
        quotas = [0] * k
        for i in h:
            quotas[i] += 1
        quotas = tuple(quotas)
        sw = sum(instance.values[j][h[j]] - w[h[j]] for j in range(m))
        if quotas not in best or sw > best[quotas]:
            best[quotas] = sw
    return best


def brute_force_oracle(instance: Instance, cap: int = DEFAULT_ORACLE_CAP) -> Fraction:
    """Optimal equilibrium welfare by enumerating every assignment function."""
    per_quota = oracle_by_quotas(instance, cap)
    feasible = [sw for q, sw in per_quota.items() if instance.cost_of(q) <= instance.budget]
    if not feasible:
        raise InfeasibleBudget("no assignment function meets the budget")
    return Fraction(max(feasible))


@dataclass(frozen=True)
class KnapsackInstance:
    values: tuple[int, ...]
    costs: tuple[int, ...]
    budget: int

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "costs", tuple(self.costs))
        if len(self.values) != len(self.costs):
            raise StructureError("knapsack values and costs must have equal length")
        if not self.values:
            raise StructureError("knapsack needs at least one item")
        for x in self.values + self.costs:
            if not isinstance(x, int) or isinstance(x, bool) or x <= 0:
                raise StructureError(f"knapsack entries must be positive integers, got {x!r}")
        if not isinstance(self.budget, int) or self.budget < 0:
            raise StructureError("knapsack budget must be a nonnegative integer")

    def to_dict(self) -> dict:
        return {
            "items": [{"value": v, "cost": c} for v, c in zip(self.values, self.costs)],
            "budget": self.budget,
        }

    @classmethod
    def from_dict(cls, data) -> "KnapsackInstance":
        if not isinstance(data, dict) or "items" not in data or "budget" not in data:
            raise InputError("knapsack: expected fields 'items' and 'budget'")
        values, costs = [], []
        for n, item in enumerate(data["items"]):
            if not isinstance(item, dict) or "value" not in item or "cost" not in item:
                raise InputError(f"items[{n}]: expected fields 'value' and 'cost'")
            values.append(item["value"])
            costs.append(item["cost"])
        try:
            return cls(tuple(values), tuple(costs), data["budget"])
        except StructureError as exc:
            raise InputError(f"knapsack: {exc}") from exc


def load_knapsack(path: str | Path) -> KnapsackInstance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return KnapsackInstance.from_dict(data)


def reduce_knapsack(kp: KnapsackInstance) -> Instance:
    """One hospital per item plus a free one nobody values; patient i wants only item i."""
    n = len(kp.values)
    rows = []
    for j, v in enumerate(kp.values):
        row = [0] * (n + 1)
        row[j] = v
        rows.append(tuple(row))
    names = tuple(f"item{i}" for i in range(n)) + ("none",)
    return Instance(tuple(kp.costs) + (0,), tuple(rows), kp.budget, hospital_names=names)


def knapsack_optimum(kp: KnapsackInstance) -> int:
    """Best total value over all 2^n item subsets within budget."""
    best = 0
    n = len(kp.values)
    for mask in range(1 << n):
        cost = value = 0
        for i in range(n):
            if mask >> i & 1:
                cost += kp.costs[i]
                value += kp.values[i]
        if cost <= kp.budget and value > best:
            best = value
    return best
