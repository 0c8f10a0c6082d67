"""Equilibrium assignments with an epsilon budget deficit.

Instead of every quota vector, only vectors whose entries lie on a geometric
grid ``0, floor((1+eps)), floor((1+eps)^2), ...`` are tried.  Some grid vector
is within a factor ``1+eps`` of the optimal quotas in every coordinate, and
its bidder-optimal matching dominates the optimum, so the best candidate is at
least as good as the budget-B optimum while spending at most ``(1+eps)B``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

from paw.errors import InfeasibleBudget, InvariantFailure, StructureError
from paw.matching import assignment_for_quotas
from paw.model import Assignment, Instance, WelfareReport, as_fraction, check_equilibrium, evaluate, settle_ties


@dataclass(frozen=True)
class ApproxConfig:
    epsilon: Fraction
    levels: int  # L, the smallest l with (1+eps)^l >= m
    grid: tuple[int, ...]  # distinct grid values, ascending, starting at 0

    def covers(self, n: int) -> bool:
        """Is some grid point within ``[n, (1+eps)n]``?"""
        return any(n <= c <= (1 + self.epsilon) * n for c in self.grid)


def grid_of(m: int, epsilon) -> ApproxConfig:
    """Grid for ``m`` patients; powers are evaluated exactly before flooring."""
    eps = as_fraction(epsilon)
    if eps <= 0:
        raise StructureError("epsilon must be positive")
    if m < 1:
        raise StructureError("the grid needs m >= 1")
    base = 1 + eps
    levels, power = 0, Fraction(1)
    while power < m:
        levels += 1
        power *= base
    points = {0}
    power = Fraction(1)
    for _ in range(levels):
        power *= base
        points.add(power.numerator // power.denominator)
    if m == 1:
        # L = 0 would leave only {0}; a single patient still needs a slot
        points.add(1)
    return ApproxConfig(eps, levels, tuple(sorted(points)))


def candidate_vectors(instance: Instance, config: ApproxConfig, budget) -> Iterator[tuple[int, ...]]:
    """Grid vectors with ``m <= sum <= (1+eps)m`` and cost at most ``(1+eps)budget``."""
    k, m = instance.k, instance.m
    c = instance.hospital_costs
    top = (1 + config.epsilon) * m
    spend = (1 + config.epsilon) * budget
    vec = [0] * k

    def rec(i, total, cost):
        if i == k:
            if total >= m:
                yield tuple(vec)
            return
        for q in config.grid:
            if total + q > top or cost + q * c[i] > spend:
                break
            vec[i] = q
            yield from rec(i + 1, total + q, cost + q * c[i])
        vec[i] = 0

    yield from rec(0, 0, 0)


def solve_approx(
    instance: Instance, config: ApproxConfig, budget=None
) -> tuple[Assignment, WelfareReport]:
    """Best bidder-optimal extraction over the surviving grid vectors.

    ``budget`` overrides the instance budget; passing ``B / (1+eps)`` gives an
    output within B itself, at a possible loss of welfare.  Ties between
    candidates go to the lexicographically smallest grid vector.
    """
    if config.levels == 0 and instance.m > 1:
        raise StructureError(f"config was built for m = 1, instance has m = {instance.m}")
    target = Fraction(instance.budget) if budget is None else as_fraction(budget)
    if instance.m * min(instance.hospital_costs) > target:
        raise InfeasibleBudget("budget cannot pay for every patient even at the cheapest hospital")

    best = None
    for guess in candidate_vectors(instance, config, target):
        a = assignment_for_quotas(instance, guess)
        sw = evaluate(instance, a).social_welfare
        if best is None or sw > best[0]:
            best = (sw, a)
    if best is None:
        raise InvariantFailure("no grid vector survived although m*c_min fits the budget")

    chosen = settle_ties(instance, best[1])
    report = evaluate(instance, chosen)
    if report.total_cost > (1 + config.epsilon) * target:
        raise InvariantFailure("approximate output exceeds the relaxed budget")
    bad = [v for v in check_equilibrium(instance, chosen) if v.kind != "budget"]
    if bad:
        raise InvariantFailure(f"approximate output violates equilibrium conditions: {bad}")
    return chosen, report
