"""Domain types for the discrete Provision-after-Wait problem.

A payer funds treatment at ``k`` hospitals with per-patient costs ``c_i``;
``m`` patients value hospital ``i`` at ``v_ij`` time units and are rationed by
waiting times ``w_i``.  Everything here is exact: costs and values are ints,
waiting times and utilities are :class:`fractions.Fraction`.

Indexing convention: ``instance.values[j][i]`` is patient ``j``'s value for
hospital ``i`` (one row per patient, matching the JSON file layout).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

from paw.errors import ContractViolation, InputError, StructureError


def as_fraction(x: Any) -> Fraction:
    """Exact conversion; floats go through ``str`` so ``0.1`` means 1/10."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(str(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot interpret {x!r} as a rational number")


@dataclass(frozen=True)
class Instance:
    hospital_costs: tuple[int, ...]
    values: tuple[tuple[int, ...], ...]
    budget: int
    hospital_names: tuple[str, ...] = ()
    patient_names: tuple[str, ...] = ()

    def __post_init__(self):
        costs = tuple(self.hospital_costs)
        values = tuple(tuple(row) for row in self.values)
        object.__setattr__(self, "hospital_costs", costs)
        object.__setattr__(self, "values", values)
        if not costs:
            raise StructureError("an instance needs at least one hospital")
        if not values:
            raise StructureError("an instance needs at least one patient")
        for i, c in enumerate(costs):
            if not isinstance(c, int) or isinstance(c, bool) or c < 0:
                raise StructureError(f"hospital {i}: cost must be a nonnegative integer, got {c!r}")
        for j, row in enumerate(values):
            if len(row) != len(costs):
                raise StructureError(
                    f"patient {j}: expected {len(costs)} values, got {len(row)}"
                )
            for i, v in enumerate(row):
                if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                    raise StructureError(
                        f"patient {j}, hospital {i}: value must be a nonnegative integer, got {v!r}"
                    )
        if not isinstance(self.budget, int) or self.budget < 0:
            raise StructureError(f"budget must be a nonnegative integer, got {self.budget!r}")
        if not self.hospital_names:
            object.__setattr__(self, "hospital_names", tuple(f"H{i}" for i in range(len(costs))))
        if not self.patient_names:
            object.__setattr__(self, "patient_names", tuple(f"P{j}" for j in range(len(values))))
        if len(self.hospital_names) != len(costs) or len(self.patient_names) != len(values):
            raise StructureError("name lists must match the number of hospitals/patients")

    @property
    def k(self) -> int:
        return len(self.hospital_costs)

    @property
    def m(self) -> int:
        return len(self.values)

    def value(self, i: int, j: int) -> int:
        """Value of patient ``j`` for hospital ``i``."""
        return self.values[j][i]

    @property
    def max_social_welfare(self) -> int:
        """Sum over patients of their best value (welfare with zero waiting)."""
        return sum(max(row) for row in self.values)

    @property
    def interesting(self) -> bool:
        """``m*c_min <= B < m*c_max``: the budget binds but the cheapest option fits."""
        c_min, c_max = min(self.hospital_costs), max(self.hospital_costs)
        return self.m * c_min <= self.budget < self.m * c_max

    def cost_of(self, quotas: Sequence[int]) -> int:
        return sum(q * c for q, c in zip(quotas, self.hospital_costs))

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "hospitals": [
                {"name": n, "cost": c} for n, c in zip(self.hospital_names, self.hospital_costs)
            ],
            "patients": [
                {"name": n, "values": list(row)} for n, row in zip(self.patient_names, self.values)
            ],
            "budget": self.budget,
        }

    @classmethod
    def from_dict(cls, data: Any, *, warn: bool = True) -> "Instance":
        """Build an instance from the JSON layout; ``count`` expands a patient row."""
        if not isinstance(data, dict):
            raise InputError("instance: top-level value must be an object")
        hospitals = _field(data, "hospitals", list, "instance")
        patients = _field(data, "patients", list, "instance")
        budget = _field(data, "budget", int, "instance")
        if not hospitals:
            raise InputError("hospitals: need at least one hospital")
        names, costs = [], []
        for i, h in enumerate(hospitals):
            where = f"hospitals[{i}]"
            if not isinstance(h, dict):
                raise InputError(f"{where}: expected an object")
            costs.append(_field(h, "cost", int, where))
            names.append(str(h.get("name", f"H{i}")))
        pnames, rows = [], []
        for j, p in enumerate(patients):
            where = f"patients[{j}]"
            if not isinstance(p, dict):
                raise InputError(f"{where}: expected an object")
            vals = _field(p, "values", list, where)
            if len(vals) != len(costs):
                raise InputError(f"{where}.values: expected {len(costs)} entries, got {len(vals)}")
            for i, v in enumerate(vals):
                if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                    raise InputError(f"{where}.values[{i}]: expected a nonnegative integer, got {v!r}")
            count = p.get("count", 1)
            if not isinstance(count, int) or isinstance(count, bool) or count < 1:
                raise InputError(f"{where}.count: expected a positive integer, got {count!r}")
            base = str(p.get("name", f"P{j}"))
            for r in range(count):
                pnames.append(base if count == 1 else f"{base}#{r + 1}")
                rows.append(tuple(vals))
        if not rows:
            raise InputError("patients: need at least one patient")
        for i, c in enumerate(costs):
            if c < 0:
                raise InputError(f"hospitals[{i}].cost: must be nonnegative")
        if budget < 0:
            raise InputError("budget: must be nonnegative")
        inst = cls(tuple(costs), tuple(rows), budget, tuple(names), tuple(pnames))
        if warn and not inst.interesting:
            warnings.warn(
                f"budget {inst.budget} outside [m*c_min, m*c_max) = "
                f"[{inst.m * min(costs)}, {inst.m * max(costs)}); solvers still run",
                stacklevel=2,
            )
        return inst


def _field(obj: dict, key: str, kind: type, where: str):
    if key not in obj:
        raise InputError(f"{where}: missing field '{key}'")
    val = obj[key]
    if kind is int:
        ok = isinstance(val, int) and not isinstance(val, bool)
    else:
        ok = isinstance(val, kind)
    if not ok:
        raise InputError(f"{where}.{key}: expected {kind.__name__}, got {type(val).__name__}")
    return val


def load_instance(path: str | Path, *, warn: bool = True) -> Instance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return Instance.from_dict(data, warn=warn)


@dataclass(frozen=True)
class Assignment:
    """Triple ``(w, h, lambda)``; quotas must count the assignment exactly."""

    waiting_times: tuple[Fraction, ...]
    assignment: tuple[int, ...]
    quotas: tuple[int, ...]

    def __post_init__(self):
        w = tuple(as_fraction(x) for x in self.waiting_times)
        h = tuple(int(x) for x in self.assignment)
        q = tuple(int(x) for x in self.quotas)
        object.__setattr__(self, "waiting_times", w)
        object.__setattr__(self, "assignment", h)
        object.__setattr__(self, "quotas", q)
        if len(w) != len(q):
            raise StructureError("waiting_times and quotas must have one entry per hospital")
        if any(x < 0 for x in w):
            raise StructureError("waiting times must be nonnegative")
        if any(x < 0 for x in q):
            raise StructureError("quotas must be nonnegative")
        for j, i in enumerate(h):
            if not 0 <= i < len(q):
                raise StructureError(f"patient {j} assigned to hospital {i}, out of range")
        counts = [0] * len(q)
        for i in h:
            counts[i] += 1
        if counts != list(q):
            raise StructureError(f"quota vector {list(q)} does not match assignment counts {counts}")

    @classmethod
    def from_choice(cls, waiting_times: Iterable, assignment: Sequence[int], k: int) -> "Assignment":
        """Build an assignment whose quotas are read off ``assignment``."""
        counts = [0] * k
        for i in assignment:
            counts[i] += 1
        return cls(tuple(waiting_times), tuple(assignment), tuple(counts))

    def to_dict(self) -> dict:
        return {
            "waiting_times": [_fraction_str(x) for x in self.waiting_times],
            "assignment": list(self.assignment),
            "quotas": list(self.quotas),
        }

    @classmethod
    def from_dict(cls, data: Any) -> "Assignment":
        if not isinstance(data, dict):
            raise InputError("assignment: top-level value must be an object")
        w = _field(data, "waiting_times", list, "assignment")
        h = _field(data, "assignment", list, "assignment")
        q = _field(data, "quotas", list, "assignment")
        try:
            wf = tuple(as_fraction(x) for x in w)
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise InputError(f"assignment.waiting_times: {exc}") from exc
        try:
            return cls(wf, tuple(h), tuple(q))
        except StructureError as exc:
            raise InputError(f"assignment: {exc}") from exc


def _fraction_str(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class WelfareReport:
    utilities: tuple[Fraction, ...]
    social_welfare: Fraction
    total_cost: int

    def to_dict(self) -> dict:
        return {
            "utilities": [_fraction_str(u) for u in self.utilities],
            "social_welfare": _fraction_str(self.social_welfare),
            "total_cost": self.total_cost,
        }


@dataclass(frozen=True)
class Violation:
    """One failed equilibrium condition.

    ``kind`` is ``"budget"`` (margin = cost over budget), ``"negative-utility"``
    (margin = -u_j) or ``"envy"`` (margin = (v_ij - w_i) - u_j for the
    hospital the patient would rather attend).
    """

    kind: str
    margin: Fraction
    patient: int | None = None
    hospital: int | None = None

    def __str__(self) -> str:
        where = ""
        if self.patient is not None:
            where += f" patient={self.patient}"
        if self.hospital is not None:
            where += f" hospital={self.hospital}"
        return f"{self.kind}{where} margin={self.margin}"


def _check_shape(instance: Instance, assignment: Assignment) -> None:
    if len(assignment.waiting_times) != instance.k:
        raise StructureError(
            f"assignment has {len(assignment.waiting_times)} hospitals, instance has {instance.k}"
        )
    if len(assignment.assignment) != instance.m:
        raise StructureError(
            f"assignment covers {len(assignment.assignment)} patients, instance has {instance.m}"
        )


def evaluate(instance: Instance, assignment: Assignment) -> WelfareReport:
    _check_shape(instance, assignment)
    w = assignment.waiting_times
    utilities = tuple(
        instance.values[j][i] - w[i] for j, i in enumerate(assignment.assignment)
    )
    return WelfareReport(utilities, sum(utilities, Fraction(0)), instance.cost_of(assignment.quotas))


def check_feasible(instance: Instance, assignment: Assignment, budget_factor=1) -> bool:
    """``sum lambda_i c_i <= budget_factor * B``; pass ``1 + eps`` for deficit feasibility."""
    _check_shape(instance, assignment)
    factor = as_fraction(budget_factor)
    if factor < 1:
        raise ValueError("budget_factor must be at least 1")
    return instance.cost_of(assignment.quotas) <= factor * instance.budget


def check_equilibrium(
    instance: Instance, assignment: Assignment, budget_factor=1
) -> list[Violation]:
    """Every failed equilibrium inequality, with its margin; empty means equilibrium."""
    _check_shape(instance, assignment)
    out: list[Violation] = []
    cost = instance.cost_of(assignment.quotas)
    cap = as_fraction(budget_factor) * instance.budget
    if cost > cap:
        out.append(Violation("budget", cost - cap))
    w = assignment.waiting_times
    for j, h in enumerate(assignment.assignment):
        row = instance.values[j]
        u = row[h] - w[h]
        if u < 0:
            out.append(Violation("negative-utility", -u, patient=j, hospital=h))
        for i in range(instance.k):
            gap = (row[i] - w[i]) - u
            if gap > 0:
                out.append(Violation("envy", gap, patient=j, hospital=i))
    return out


def best_hospitals(instance: Instance, j: int, waiting_times: Sequence[Fraction]) -> list[int]:
    """Hospitals maximizing ``v_ij - w_i`` for patient ``j``."""
    row = instance.values[j]
    utils = [row[i] - waiting_times[i] for i in range(instance.k)]
    top = max(utils)
    return [i for i, u in enumerate(utils) if u == top]


def _cheapest(instance: Instance, hospitals: Iterable[int]) -> int:
    return min(hospitals, key=lambda i: (instance.hospital_costs[i], i))


def settle_ties(instance: Instance, assignment: Assignment) -> Assignment:
    """Send every patient to the cheapest hospital among their utility maximizers.

    Utilities are unchanged, so welfare is preserved and cost can only drop.
    Patients not currently at a maximizer are left alone.
    """
    _check_shape(instance, assignment)
    w = assignment.waiting_times
    h = list(assignment.assignment)
    for j, cur in enumerate(h):
        best = best_hospitals(instance, j, w)
        if cur in best:
            h[j] = _cheapest(instance, best)
    return Assignment.from_choice(w, h, instance.k)


def derandomize(
    instance: Instance, fractional: Sequence[Sequence], waiting_times: Sequence
) -> Assignment:
    """Round a fractional equilibrium to a deterministic one of equal welfare.

    ``fractional[j][i]`` is the probability that patient ``j`` attends
    hospital ``i``.  Every hospital in a patient's support must maximize their
    utility under ``waiting_times``; the patient is sent to the cheapest of them.
    """
    w = tuple(as_fraction(x) for x in waiting_times)
    if len(w) != instance.k:
        raise StructureError(f"expected {instance.k} waiting times, got {len(w)}")
    if len(fractional) != instance.m:
        raise StructureError(f"expected {instance.m} probability rows, got {len(fractional)}")
    h = []
    for j, row in enumerate(fractional):
        probs = [as_fraction(p) for p in row]
        if len(probs) != instance.k:
            raise StructureError(f"row {j}: expected {instance.k} probabilities")
        if any(p < 0 for p in probs) or sum(probs) != 1:
            raise ContractViolation(f"row {j}: probabilities must be nonnegative and sum to 1")
        support = [i for i, p in enumerate(probs) if p > 0]
        best = set(best_hospitals(instance, j, w))
        bad = [i for i in support if i not in best]
        if bad:
            raise ContractViolation(
                f"patient {j}: hospitals {bad} in the support do not maximize their utility"
            )
        h.append(_cheapest(instance, support))
    return Assignment.from_choice(w, h, instance.k)


def expected_welfare(instance: Instance, fractional: Sequence[Sequence], waiting_times: Sequence) -> Fraction:
    w = [as_fraction(x) for x in waiting_times]
    total = Fraction(0)
    for j, row in enumerate(fractional):
        for i, p in enumerate(row):
            total += as_fraction(p) * (instance.values[j][i] - w[i])
    return total


def expected_cost(instance: Instance, fractional: Sequence[Sequence]) -> Fraction:
    return sum(
        (as_fraction(p) * instance.hospital_costs[i] for row in fractional for i, p in enumerate(row)),
        Fraction(0),
    )
