"""Emergence of waiting times from quota-driven dynamics.

Given quotas ``lambda``, patient types arrive at unit rate and choose a
utility-maximizing hospital; a hospital's waiting time grows when demand
exceeds its service rate and shrinks (down to zero) otherwise.  For
independent valuations the waiting times converge to the minimum equilibrium
vector ``w_bar`` and never exceed it on the way.

This module computes ``w_bar`` with its demand graph, checks independence,
integrates the dynamics with explicit Euler steps and verifies a trace
against the convergence guarantees.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from numba import njit

from paw.errors import CapExceeded, StructureError
from paw.matching import assignment_for_quotas
from paw.model import Instance

EXACT_INDEPENDENCE_CAP = 24


# -- independence -----------------------------------------------------------

def _distinct_subset_sums(values: Sequence[int]) -> bool:
    """True iff all ``2^n`` subsets of the positive ``values`` have different sums."""
    vals = sorted(values)
    total = sum(vals)
    if total <= 1 << 26:
        reach = 1  # bit s set <=> some subset sums to s
        for v in vals:
            shifted = reach << v
            if reach & shifted:
                return False
            reach |= shifted
        return True
    if total < 1 << 62:
        sums = np.zeros(1, dtype=np.int64)
        for v in vals:
            sums = np.concatenate([sums, sums + v])
            sums.sort()
            if np.any(sums[1:] == sums[:-1]):
                return False
        return True
    seen = {0}
    for v in vals:
        shifted = {s + v for s in seen}
        if shifted & seen:
            return False
        seen |= shifted
    return True


def _multiset_independent(values: Sequence[int]) -> bool:
    positive = [v for v in values if v > 0]
    if not positive:
        return True
    if len(positive) < len(values):
        # S = {0, v} and T = {v} are different subsets with the same sum
        return False
    return _distinct_subset_sums(positive)


def check_independence(
    instance: Instance,
    *,
    randomized: bool = False,
    seed: int = 0,
    windows: int = 64,
    window_size: int = 20,
    exact_cap: int = EXACT_INDEPENDENCE_CAP,
) -> bool:
    """Are the valuations independent (no two subsets with a positive entry share a sum)?

    Zeros count as entries, so any zero next to a positive value makes the
    instance dependent.  Exact mode enumerates subset sums and is limited to
    ``k*m <= exact_cap`` entries.  Randomized mode checks ``windows`` random
    sub-multisets of ``window_size`` entries exactly: ``False`` is always a
    proof of dependence, ``True`` is only evidence.
    """
    flat = [v for row in instance.values for v in row]
    if len(flat) <= exact_cap:
        return _multiset_independent(flat)
    if not randomized:
        raise CapExceeded(
            f"exact independence check limited to k*m <= {exact_cap}, got {len(flat)}; "
            "use the randomized mode"
        )
    positive = [v for v in flat if v > 0]
    if positive and len(positive) < len(flat):
        return False
    if len(set(positive)) < len(positive):
        return False
    rng = random.Random(seed)
    size = min(window_size, len(flat))
    for _ in range(windows):
        if not _distinct_subset_sums(rng.sample(positive, size)):
            return False
    return True


# -- minimum equilibrium ----------------------------------------------------

@dataclass(frozen=True)
class MinEquilibrium:
    """Minimum equilibrium waiting times for fixed quotas, with the demand graph.

    ``demand_graph[j]`` lists the hospitals maximizing patient ``j``'s utility
    at ``w_bar``.  ``parent[i]`` is the hospital above ``i`` in its tree
    (``None`` at a root); hospital ``a`` precedes ``b`` when ``a`` is a proper
    ancestor of ``b``.  ``diagnostics`` is empty exactly when every structural
    property expected under independence holds.
    """

    w_bar: tuple[Fraction, ...]
    h_bar: tuple[int, ...]
    quotas: tuple[int, ...]
    demand_graph: tuple[tuple[int, ...], ...]
    component: tuple[int, ...]  # component id per hospital
    parent: tuple[int | None, ...]
    unique: bool | None
    diagnostics: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.diagnostics

    def precedes(self, a: int, b: int) -> bool:
        node = self.parent[b]
        while node is not None:
            if node == a:
                return True
            node = self.parent[node]
        return False

    def precedence_matrix(self) -> np.ndarray:
        k = len(self.w_bar)
        return np.array([[self.precedes(a, b) for b in range(k)] for a in range(k)], dtype=np.bool_)


def _components(k: int, m: int, graph) -> list[int]:
    """Union-find labels over hospitals ``0..k-1`` and patients ``k..k+m-1``."""
    label = list(range(k + m))

    def find(x):
        while label[x] != x:
            label[x] = label[label[x]]
            x = label[x]
        return x

    for j, hs in enumerate(graph):
        for i in hs:
            a, b = find(i), find(k + j)
            if a != b:
                label[max(a, b)] = min(a, b)
    return [find(x) for x in range(k + m)]


def min_equilibrium(
    instance: Instance, quotas: Sequence[int], *, uniqueness_cap: int = 100_000
) -> MinEquilibrium:
    """Minimum equilibrium ``(w_bar, h_bar)`` for ``quotas`` and its structure.

    Structural failures (expected only for dependent valuations) are recorded
    in ``diagnostics`` instead of raised.  Uniqueness of the equilibrium
    assignment at ``w_bar`` is decided by enumeration when the number of
    candidate assignments is at most ``uniqueness_cap``.
    """
    quotas = tuple(quotas)
    k, m = instance.k, instance.m
    if len(quotas) != k:
        raise StructureError(f"expected {k} quotas, got {len(quotas)}")
    if any(not isinstance(q, int) or q <= 0 for q in quotas):
        raise StructureError("dynamics quotas must be positive integers")
    if sum(quotas) < m:
        raise StructureError("quotas must cover every patient type")

    eq = assignment_for_quotas(instance, quotas)
    w_bar, h_bar = eq.waiting_times, eq.assignment
    graph = []
    for row in instance.values:
        best = max(v - w for v, w in zip(row, w_bar))
        graph.append(tuple(i for i in range(k) if row[i] - w_bar[i] == best))
    notes: list[str] = []

    labels = _components(k, m, graph)
    n_comp = len(set(labels))
    edges = sum(len(hs) for hs in graph)
    if edges != k + m - n_comp:
        notes.append("demand graph has a cycle")

    comp_of = {lab: n for n, lab in enumerate(sorted(set(labels[:k])))}
    component = tuple(comp_of[labels[i]] for i in range(k))
    parent: list[int | None] = [None] * k
    visited = [False] * k
    for c in range(len(comp_of)):
        members = [i for i in range(k) if component[i] == c]
        zeros = [i for i in members if w_bar[i] == 0]
        if len(zeros) != 1:
            notes.append(f"component {members} has {len(zeros)} zero-wait hospitals")
        root = zeros[0] if zeros else min(members, key=lambda i: (w_bar[i], i))
        visited[root] = True
        queue = deque([root])
        while queue:
            a = queue.popleft()
            for j in range(m):
                if a in graph[j]:
                    for b in graph[j]:
                        if not visited[b]:
                            visited[b] = True
                            parent[b] = a
                            queue.append(b)
    for j, hs in enumerate(graph):
        # the patient's own predecessor is the unique hospital of hs without its parent in hs
        tops = [i for i in hs if parent[i] not in hs]
        if len(tops) == 1 and h_bar[j] != tops[0]:
            notes.append(f"patient {j} is not assigned to its predecessor in the demand graph")

    counts = [0] * k
    for i in h_bar:
        counts[i] += 1
    for i in range(k):
        if w_bar[i] > 0 and counts[i] != quotas[i]:
            notes.append(f"hospital {i} has positive wait {w_bar[i]} but serves {counts[i]} < {quotas[i]}")

    unique = None
    if math.prod(len(hs) for hs in graph) <= uniqueness_cap:
        found = 0
        for h in itertools.product(*graph):
            load = [0] * k
            for i in h:
                load[i] += 1
            if all(load[i] <= quotas[i] for i in range(k)):
                found += 1
                if found > 1:
                    break
        unique = found == 1
        if not unique:
            notes.append("equilibrium assignment at w_bar is not unique")

    return MinEquilibrium(
        w_bar, h_bar, quotas, tuple(graph), component, tuple(parent), unique, tuple(notes)
    )


def demand_rates(
    instance: Instance, eq: MinEquilibrium, w: Sequence, weights=None
) -> tuple[tuple[Fraction, ...], ...]:
    """Exact ``d[j][i]``: maximizers of ``v_ij - w_i`` after dropping any that
    descends from another maximizer in the demand tree at ``w_bar``; the unit
    rate is split by ``weights`` (equal by default).

    Keeping the ancestor is what makes ``w_bar`` stationary: a patient tied
    between its predecessor and a child hospital stays with the predecessor.
    """
    w = [Fraction(x) for x in w]
    k = instance.k
    rates = []
    for j, row in enumerate(instance.values):
        best = max(row[i] - w[i] for i in range(k))
        tied = [i for i in range(k) if row[i] - w[i] == best]
        keep = [a for a in tied if not any(b != a and eq.precedes(b, a) for b in tied)]
        wt = [Fraction(1) if weights is None else Fraction(weights[j][i]) for i in keep]
        total = sum(wt)
        share = dict(zip(keep, (x / total for x in wt)))
        rates.append(tuple(share.get(i, Fraction(0)) for i in range(k)))
    return tuple(rates)


def right_derivative(instance: Instance, eq: MinEquilibrium, w: Sequence, weights=None) -> tuple[Fraction, ...]:
    """Exact right derivative of every waiting time at ``w``."""
    rates = demand_rates(instance, eq, w, weights)
    out = []
    for i, lam in enumerate(eq.quotas):
        d = sum(r[i] for r in rates)
        out.append(d / lam - 1 if Fraction(w[i]) > 0 or d >= lam else Fraction(0))
    return tuple(out)


# -- simulation ------------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    t_max: float | None = None  # None: the convergence bound plus the hold period
    tolerance: float = 0.05
    tie_tolerance: float = 1e-9
    hold: float = 1.0  # time simulated past convergence
    split: str = "equal"  # or "random"
    seed: int = 0
    max_rows: int = 1 << 16

    def __post_init__(self):
        if not self.dt > 0:
            raise StructureError("dt must be positive")
        if not self.tolerance > 0:
            raise StructureError("tolerance must be positive")
        if self.t_max is not None and not self.t_max >= 0:
            raise StructureError("t_max must be nonnegative")
        if self.hold < 0:
            raise StructureError("hold must be nonnegative")
        if self.split not in ("equal", "random"):
            raise StructureError("split must be 'equal' or 'random'")
        if self.max_rows < 2 or self.max_rows % 2:
            raise StructureError("max_rows must be an even number >= 2")


@dataclass(frozen=True, eq=False)
class DynamicsTrace:
    """A recorded run.

    Row ``r`` holds the state at ``times[r]``; long runs are thinned by
    doubling the recording stride, and ``w_peak``/``potential_rise`` keep the
    worst values seen since the previous row so that no step escapes the
    checks.  ``potential_rise`` is ``P(t)`` minus the running minimum of P.
    """

    times: np.ndarray
    w_series: np.ndarray
    d_series: np.ndarray
    potential_series: np.ndarray
    w_peak: np.ndarray
    potential_rise: np.ndarray
    converged_at: float | None
    dt: float
    tolerance: float
    stride: int
    steps: int
    quotas: tuple[int, ...]
    msw: int
    diagnostics: tuple[str, ...] = ()

    @property
    def bound(self) -> int:
        """Convergence time guaranteed for independent valuations, ``2 k lambda_max MSW``."""
        return 2 * len(self.quotas) * max(self.quotas) * self.msw

    def to_csv(self) -> str:
        k = self.w_series.shape[1]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["t"] + [f"w_{i + 1}" for i in range(k)] + [f"d_{i + 1}" for i in range(k)] + ["potential"]
        )
        for r in range(len(self.times)):
            writer.writerow(
                [_num(self.times[r])]
                + [_num(x) for x in self.w_series[r]]
                + [_num(x) for x in self.d_series[r]]
                + [_num(self.potential_series[r])]
            )
        return buf.getvalue()


def _num(x: float) -> str:
    return repr(float(x))


@njit(cache=True)
def _euler(V, lam, w_bar, prec, dt, n_max, tol, tie_tol, hold_steps, random_split, seed, capacity):
    m, k = V.shape
    if random_split:
        np.random.seed(seed)
    w = np.zeros(k)
    d = np.zeros(k)
    tied = np.zeros(k, dtype=np.bool_)
    keep = np.zeros(k, dtype=np.bool_)
    wt = np.zeros(k)

    size = capacity + 2
    times = np.empty(size)
    W = np.empty((size, k))
    D = np.empty((size, k))
    P = np.empty(size)
    Wpk = np.empty((size, k))
    Rise = np.empty(size)

    rows = 0
    stride = 1
    run_min = np.inf
    rise = 0.0
    peak = np.full(k, -np.inf)
    conv_step = -1
    end_step = n_max
    step = 0
    while True:
        d[:] = 0.0
        usum = 0.0
        for j in range(m):
            best = -np.inf
            for i in range(k):
                u = V[j, i] - w[i]
                if u > best:
                    best = u
            usum += best
            for i in range(k):
                tied[i] = V[j, i] - w[i] >= best - tie_tol
            total = 0.0
            for a in range(k):
                keep[a] = tied[a]
                if tied[a]:
                    for b in range(k):
                        if b != a and tied[b] and prec[b, a]:
                            keep[a] = False
                            break
                if keep[a]:
                    wt[a] = np.random.random() + 1e-3 if random_split else 1.0
                    total += wt[a]
            for a in range(k):
                if keep[a]:
                    d[a] += wt[a] / total

        pot = usum
        err = 0.0
        for i in range(k):
            pot += lam[i] * w[i]
            if w[i] > peak[i]:
                peak[i] = w[i]
            e = abs(w[i] - w_bar[i])
            if e > err:
                err = e
        if pot < run_min:
            run_min = pot
        if pot - run_min > rise:
            rise = pot - run_min
        if conv_step < 0 and err <= tol:
            conv_step = step
            end_step = min(n_max, step + hold_steps)
        last = step >= end_step

        if step % stride == 0 or last:
            if rows == capacity + 1:
                # keep row 0, merge pairs of later rows and double the stride
                for r in range(1, capacity // 2 + 1):
                    a, b = 2 * r - 1, 2 * r
                    times[r] = times[b]
                    P[r] = P[b]
                    Rise[r] = max(Rise[a], Rise[b])
                    for i in range(k):
                        W[r, i] = W[b, i]
                        D[r, i] = D[b, i]
                        Wpk[r, i] = max(Wpk[a, i], Wpk[b, i])
                rows = capacity // 2 + 1
                stride *= 2
            if step % stride == 0 or last:
                times[rows] = step * dt
                P[rows] = pot
                Rise[rows] = rise
                for i in range(k):
                    W[rows, i] = w[i]
                    D[rows, i] = d[i]
                    Wpk[rows, i] = peak[i]
                    peak[i] = -np.inf
                rise = 0.0
                rows += 1
        if last:
            break

        for i in range(k):
            if w[i] > 0.0 or d[i] >= lam[i] - 1e-12:
                w[i] += (d[i] / lam[i] - 1.0) * dt
                if w[i] < 0.0:
                    w[i] = 0.0
        step += 1

    return times[:rows], W[:rows], D[:rows], P[:rows], Wpk[:rows], Rise[:rows], conv_step, step, stride


def simulate(
    instance: Instance,
    quotas: Sequence[int],
    config: SimConfig = SimConfig(),
    eq: MinEquilibrium | None = None,
) -> DynamicsTrace:
    """Integrate the waiting-time dynamics from ``w(0) = 0``.

    Stops ``config.hold`` time units after ``w`` first comes within
    ``config.tolerance`` of ``w_bar``, or at ``t_max``.  A maximizer below
    another maximizer in the same demand tree is dropped; the remaining ties
    are split equally or, with ``split="random"``, by seeded random weights
    drawn afresh at every step.
    """
    if eq is None:
        eq = min_equilibrium(instance, quotas)
    elif tuple(quotas) != eq.quotas:
        raise StructureError("quotas differ from those of the given equilibrium")
    msw = instance.max_social_welfare
    k = instance.k
    bound = 2 * k * max(eq.quotas) * msw
    t_max = config.t_max if config.t_max is not None else bound + config.hold
    n_max = int(math.ceil(t_max / config.dt - 1e-9))
    hold_steps = int(math.ceil(config.hold / config.dt - 1e-9))

    V = np.array(instance.values, dtype=np.float64)
    lam = np.array(eq.quotas, dtype=np.float64)
    w_bar = np.array([float(x) for x in eq.w_bar])
    times, W, D, P, Wpk, Rise, conv_step, steps, stride = _euler(
        V, lam, w_bar, eq.precedence_matrix(), float(config.dt), n_max, float(config.tolerance),
        float(config.tie_tolerance), hold_steps, config.split == "random", int(config.seed) % (2**32),
        int(config.max_rows),
    )
    notes = list(eq.diagnostics)
    converged_at = None
    if conv_step >= 0:
        converged_at = conv_step * config.dt
    else:
        notes.append(f"no convergence within t_max = {t_max}")
    return DynamicsTrace(
        times, W, D, P, Wpk, Rise, converged_at, float(config.dt), float(config.tolerance),
        int(stride), int(steps), eq.quotas, msw, tuple(notes),
    )


# -- verification -------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    passed: bool
    detail: str


@dataclass(frozen=True)
class TraceReport:
    checks: dict = field(default_factory=dict)  # name -> CheckResult

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_dict(self) -> dict:
        return {name: {"passed": c.passed, "detail": c.detail} for name, c in self.checks.items()}


def verify_trace(
    trace: DynamicsTrace,
    eq: MinEquilibrium,
    slack: float | None = None,
    *,
    instance: Instance | None = None,
    window: float = 1.0,
) -> TraceReport:
    """Check a trace against the guarantees for independent valuations.

    * ``a``: ``w(t) <= w_bar + slack`` at every step.
    * ``b``: the potential never rises more than ``slack`` above its running minimum.
    * ``c``: before convergence, the potential falls at average rate at least
      ``1/(2 k lambda_max) - slack`` over every window of length ``window``.
    * ``d``: every right derivative is exactly zero at ``w_bar`` (needs
      ``instance``) and ``w`` stays within tolerance after converging.
    """
    slack = 2 * trace.dt if slack is None else slack
    w_bar = np.array([float(x) for x in eq.w_bar])
    checks = {}

    over = trace.w_peak - w_bar[None, :]
    bad = np.nonzero(over.max(axis=1) > slack)[0]
    if len(bad):
        r = int(bad[0])
        i = int(np.argmax(over[r]))
        checks["a"] = CheckResult(
            False,
            f"w_{i + 1} exceeds w_bar by {over[r, i]:.6g} in the steps up to t = {trace.times[r]:.6g}",
        )
    elif (trace.w_series < 0).any():
        checks["a"] = CheckResult(False, "negative waiting time recorded")
    else:
        checks["a"] = CheckResult(True, f"max excess {max(0.0, float(over.max())):.3g}")

    rise = float(trace.potential_rise.max()) if len(trace.potential_rise) else 0.0
    if rise > slack:
        r = int(np.argmax(trace.potential_rise > slack))
        checks["b"] = CheckResult(False, f"potential rose by {rise:.6g} near t = {trace.times[r]:.6g}")
    else:
        checks["b"] = CheckResult(True, f"max rise {rise:.3g}")

    rate_needed = 1.0 / (2 * len(eq.quotas) * max(eq.quotas)) - slack
    span = max(window, trace.stride * trace.dt)
    end = trace.converged_at if trace.converged_at is not None else float(trace.times[-1])
    worst = math.inf
    where = None
    t, P = trace.times, trace.potential_series
    for r in range(len(t)):
        s = int(np.searchsorted(t, t[r] + span - 1e-9))
        if s >= len(t) or t[s] > end + 1e-9:
            break
        rate = (P[r] - P[s]) / (t[s] - t[r])
        if rate < worst:
            worst, where = rate, float(t[r])
    if where is not None and worst < rate_needed:
        checks["c"] = CheckResult(
            False, f"potential fell at rate {worst:.6g} < {rate_needed:.6g} on the window from t = {where:.6g}"
        )
    else:
        detail = "no full window before convergence" if where is None else f"slowest window rate {worst:.6g}"
        checks["c"] = CheckResult(True, detail)

    problems = []
    if instance is not None:
        deriv = right_derivative(instance, eq, eq.w_bar)
        nonzero = [i for i, x in enumerate(deriv) if x != 0]
        if nonzero:
            problems.append(f"nonzero right derivative at w_bar for hospitals {nonzero}")
    if trace.converged_at is not None:
        after = trace.times >= trace.converged_at - 1e-12
        drift = float(np.abs(trace.w_series[after] - w_bar[None, :]).max())
        if drift > trace.tolerance:
            problems.append(f"w drifted {drift:.6g} from w_bar after converging")
    checks["d"] = CheckResult(not problems, "; ".join(problems) or "stationary at w_bar")
    return TraceReport(checks)


def summary(trace: DynamicsTrace, report: TraceReport, eq: MinEquilibrium, independent: bool | None) -> dict:
    """JSON-ready run summary."""
    return {
        "converged_at": trace.converged_at,
        "bound": trace.bound,
        "within_bound": trace.converged_at is not None and trace.converged_at <= trace.bound,
        "w_bar": [str(x) for x in eq.w_bar],
        "h_bar": list(eq.h_bar),
        "quotas": list(trace.quotas),
        "independent": independent,
        "checks": report.to_dict(),
        "steps": trace.steps,
        "stride": trace.stride,
        "diagnostics": list(trace.diagnostics),
    }


def summary_json(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"
