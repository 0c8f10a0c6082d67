"""Two-hospital continuum model: randomized assignment versus lotteries.

Patients ``x`` in ``[0, 1]`` value the good hospital at ``v(x)`` (non-decreasing,
``v(0) = 0``); treating a patient there costs 1 per unit mass and the budget is
``B``.  A contract ``(p, w)`` serves with probability ``p`` after waiting ``w``;
a lottery is a menu of contracts, closed under mixing.  Everything is exact:
curves are piecewise linear with rational breakpoints and menus are finite,
so welfare and budget integrals are sums of trapezoids.
"""

from __future__ import annotations

import json
import random
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable

from paw.errors import ContractViolation, InputError, InvariantFailure, StructureError
from paw.model import as_fraction

DOMINANCE_TOLERANCE = Fraction(1, 10**9)


@dataclass(frozen=True)
class ValuationCurve:
    """Piecewise-linear ``v`` through ``breakpoints`` ``(x, v)`` from ``x = 0`` to ``x = 1``.

    ``declared_regular`` marks a sampled curve whose underlying function has
    ``(1-x) v'(x)`` non-increasing (such as ``e^x - 1``); a piecewise-linear
    curve only has that property itself when it is concave.
    """

    breakpoints: tuple[tuple[Fraction, Fraction], ...]
    declared_regular: bool = False

    def __post_init__(self):
        pts = tuple((as_fraction(x), as_fraction(v)) for x, v in self.breakpoints)
        object.__setattr__(self, "breakpoints", pts)
        if len(pts) < 2:
            raise StructureError("a curve needs at least two breakpoints")
        if pts[0] != (0, 0):
            raise StructureError("a curve must start at (0, 0)")
        if pts[-1][0] != 1:
            raise StructureError("a curve must end at x = 1")
        for (x0, v0), (x1, v1) in zip(pts, pts[1:]):
            if x1 <= x0:
                raise StructureError(f"breakpoint x must strictly increase, got {x0} then {x1}")
            if v1 < v0:
                raise StructureError(f"v must be non-decreasing, got {v0} then {v1} at x = {x1}")

    @classmethod
    def linear(cls, slope=1) -> "ValuationCurve":
        return cls(((0, 0), (1, as_fraction(slope))))

    @classmethod
    def sample(cls, f: Callable[[float], float], n: int, *, declared_regular: bool = False) -> "ValuationCurve":
        """Interpolate ``f`` at ``n+1`` equally spaced points; ``f(0)`` is shifted to 0."""
        base = f(0.0)
        pts = []
        for r in range(n + 1):
            v = Fraction(f(r / n) - base).limit_denominator(10**12) if r else Fraction(0)
            if pts and v < pts[-1][1]:
                v = pts[-1][1]
            pts.append((Fraction(r, n), v))
        return cls(tuple(pts), declared_regular)

    @property
    def xs(self) -> tuple[Fraction, ...]:
        return tuple(x for x, _ in self.breakpoints)

    def slopes(self) -> tuple[Fraction, ...]:
        return tuple(
            (v1 - v0) / (x1 - x0) for (x0, v0), (x1, v1) in zip(self.breakpoints, self.breakpoints[1:])
        )

    @property
    def is_concave(self) -> bool:
        s = self.slopes()
        return all(a >= b for a, b in zip(s, s[1:]))

    @property
    def regular(self) -> bool:
        """Does the dominance guarantee apply (``(1-x) v'(x)`` non-increasing)?"""
        return self.is_concave or self.declared_regular

    def value(self, x) -> Fraction:
        x = as_fraction(x)
        if not 0 <= x <= 1:
            raise StructureError(f"x = {x} outside [0, 1]")
        pts = self.breakpoints
        r = min(bisect_right(self.xs, x), len(pts) - 1)
        (x0, v0), (x1, v1) = pts[r - 1], pts[r]
        return v0 + (v1 - v0) * (x - x0) / (x1 - x0)

    def integral(self) -> Fraction:
        return sum(
            ((x1 - x0) * (v0 + v1) / 2 for (x0, v0), (x1, v1) in zip(self.breakpoints, self.breakpoints[1:])),
            Fraction(0),
        )

    def last_at_most(self, s) -> Fraction:
        """``sup {x : v(x) <= s}`` (0 when ``s < 0``)."""
        s = as_fraction(s)
        pts = self.breakpoints
        if s < 0:
            return Fraction(0)
        if s >= pts[-1][1]:
            return Fraction(1)
        vs = [v for _, v in pts]
        r = bisect_right(vs, s)  # first breakpoint with v > s
        (x0, v0), (x1, v1) = pts[r - 1], pts[r]
        return x0 + (s - v0) * (x1 - x0) / (v1 - v0)

    def first_at_least(self, s) -> Fraction:
        """``inf {x : v(x) >= s}`` (1 when ``s`` exceeds ``v(1)``)."""
        s = as_fraction(s)
        pts = self.breakpoints
        if s <= 0:
            return Fraction(0)
        if s > pts[-1][1]:
            return Fraction(1)
        vs = [v for _, v in pts]
        r = bisect_left(vs, s)  # first breakpoint with v >= s
        (x0, v0), (x1, v1) = pts[r - 1], pts[r]
        return x0 + (s - v0) * (x1 - x0) / (v1 - v0)

    def to_dict(self) -> dict:
        out = {"breakpoints": [[_fstr(x), _fstr(v)] for x, v in self.breakpoints]}
        if self.declared_regular:
            out["declared_regular"] = True
        return out

    @classmethod
    def from_dict(cls, data) -> "ValuationCurve":
        if not isinstance(data, dict) or "breakpoints" not in data:
            raise InputError("curve: missing field 'breakpoints'")
        pts = []
        for n, pt in enumerate(data["breakpoints"]):
            if not isinstance(pt, (list, tuple)) or len(pt) != 2:
                raise InputError(f"breakpoints[{n}]: expected [x, v]")
            try:
                pts.append((_parse_num(pt[0]), _parse_num(pt[1])))
            except (TypeError, ValueError, ZeroDivisionError) as exc:
                raise InputError(f"breakpoints[{n}]: {exc}") from exc
        try:
            return cls(tuple(pts), bool(data.get("declared_regular", False)))
        except StructureError as exc:
            raise InputError(f"curve: {exc}") from exc


@dataclass(frozen=True)
class Contract:
    p: Fraction
    w: Fraction

    def __post_init__(self):
        object.__setattr__(self, "p", as_fraction(self.p))
        object.__setattr__(self, "w", as_fraction(self.w))
        if not 0 <= self.p <= 1:
            raise StructureError(f"contract probability {self.p} outside [0, 1]")
        if self.w < 0:
            raise StructureError(f"contract waiting time {self.w} is negative")

    @property
    def expected_wait(self) -> Fraction:
        return self.p * self.w


@dataclass(frozen=True)
class LotteryMenu:
    """A finite menu; patients may also mix any two contracts.

    Patients indifferent between two neighbouring offers take the smaller
    probability, except that a ``tie_fill`` share of the way to the larger one
    is taken when ``tie_fill`` is set (used to spend the budget exactly when a
    positive mass of patients is indifferent).
    """

    contracts: tuple[Contract, ...]
    tie_fill: Fraction = Fraction(0)

    def __post_init__(self):
        cs = tuple(c if isinstance(c, Contract) else Contract(*c) for c in self.contracts)
        object.__setattr__(self, "contracts", cs)
        object.__setattr__(self, "tie_fill", as_fraction(self.tie_fill))
        if not cs:
            raise StructureError("a menu needs at least one contract")
        if not 0 <= self.tie_fill <= 1:
            raise StructureError("tie_fill must lie in [0, 1]")

    def hull(self) -> tuple[tuple[Fraction, Fraction], ...]:
        """Vertices ``(p, p*w)`` of the lower convex hull, ``p`` increasing, no collinear points."""
        best: dict[Fraction, Fraction] = {}
        for c in self.contracts:
            q = c.expected_wait
            if c.p not in best or q < best[c.p]:
                best[c.p] = q
        pts = sorted(best.items())
        out: list[tuple[Fraction, Fraction]] = []
        for pt in pts:
            while len(out) >= 2:
                (p0, q0), (p1, q1) = out[-2], out[-1]
                # drop the middle point unless it lies strictly below the chord
                if (q1 - q0) * (pt[0] - p0) >= (pt[1] - q0) * (p1 - p0):
                    out.pop()
                else:
                    break
            out.append(pt)
        return tuple(out)

    def hull_slopes(self) -> tuple[Fraction, ...]:
        h = self.hull()
        return tuple((q1 - q0) / (p1 - p0) for (p0, q0), (p1, q1) in zip(h, h[1:]))

    @property
    def domain(self) -> tuple[Fraction, Fraction]:
        h = self.hull()
        return h[0][0], h[-1][0]

    def to_dict(self) -> dict:
        out = {"contracts": [{"p": _fstr(c.p), "w": _fstr(c.w)} for c in self.contracts]}
        if self.tie_fill:
            out["tie_fill"] = _fstr(self.tie_fill)
        return out

    @classmethod
    def from_dict(cls, data) -> "LotteryMenu":
        if not isinstance(data, dict) or "contracts" not in data:
            raise InputError("menu: missing field 'contracts'")
        cs = []
        for n, c in enumerate(data["contracts"]):
            if not isinstance(c, dict) or "p" not in c or "w" not in c:
                raise InputError(f"contracts[{n}]: expected fields 'p' and 'w'")
            try:
                cs.append(Contract(_parse_num(c["p"]), _parse_num(c["w"])))
            except (TypeError, ValueError, ZeroDivisionError) as exc:
                raise InputError(f"contracts[{n}]: {exc}") from exc
        try:
            return cls(tuple(cs), _parse_num(data.get("tie_fill", 0)))
        except (StructureError, TypeError, ValueError) as exc:
            raise InputError(f"menu: {exc}") from exc


def _parse_num(x) -> Fraction:
    if isinstance(x, bool) or not isinstance(x, (int, float, str)):
        raise TypeError(f"expected a number, got {x!r}")
    return as_fraction(x)


def _fstr(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _choice(hull, slopes, tie_fill, v) -> tuple[Fraction, Fraction]:
    """``(p, p*w)`` chosen by a patient with value ``v``."""
    r = bisect_left(slopes, v)  # vertices after every slope strictly below v
    p, q = hull[r]
    if tie_fill and r < len(slopes) and slopes[r] == v:
        p1, q1 = hull[r + 1]
        p, q = p + tie_fill * (p1 - p), q + tie_fill * (q1 - q)
    return p, q


def patient_choice(curve: ValuationCurve, menu: LotteryMenu, x) -> tuple[Contract, Fraction]:
    """Utility-maximizing contract for patient ``x`` and its expected utility."""
    v = curve.value(x)
    p, q = _choice(menu.hull(), menu.hull_slopes(), menu.tie_fill, v)
    return Contract(p, q / p if p else 0), p * v - q


def sw_randomized(curve: ValuationCurve, budget) -> Fraction:
    """Welfare of serving everybody with probability ``B`` and no wait."""
    b = as_fraction(budget)
    if not 0 < b < 1:
        raise ContractViolation(f"budget must lie in (0, 1), got {b}")
    return b * curve.integral()


def sw_lottery(curve: ValuationCurve, menu: LotteryMenu) -> tuple[Fraction, Fraction]:
    """``(SW_L, realized budget)``: integrals of ``u(x)`` and ``p(x)`` over ``[0, 1]``."""
    hull, slopes = menu.hull(), menu.hull_slopes()
    welfare = budget = Fraction(0)
    last_p = None
    for (x0, v0), (x1, v1) in zip(curve.breakpoints, curve.breakpoints[1:]):
        if v0 == v1:
            p, q = _choice(hull, slopes, menu.tie_fill, v0)
            welfare += (x1 - x0) * (p * v0 - q)
            budget += (x1 - x0) * p
            pieces = [p]
        else:
            cuts = [x0] + [x0 + (s - v0) * (x1 - x0) / (v1 - v0) for s in slopes if v0 < s < v1] + [x1]
            pieces = []
            for a, b in zip(cuts, cuts[1:]):
                # the choice is constant inside (a, b); evaluate at the midpoint's value
                vm = v0 + (v1 - v0) * ((a + b) / 2 - x0) / (x1 - x0)
                r = bisect_left(slopes, vm)
                p, q = hull[r]
                va = v0 + (v1 - v0) * (a - x0) / (x1 - x0)
                vb = v0 + (v1 - v0) * (b - x0) / (x1 - x0)
                welfare += (b - a) * (p * (va + vb) / 2 - q)
                budget += (b - a) * p
                pieces.append(p)
        for p in pieces:
            if last_p is not None and p < last_p:
                raise InvariantFailure("p(x) decreased along the curve")
            last_p = p
    return welfare, budget


def envelope_utility(curve: ValuationCurve, menu: LotteryMenu, x) -> Fraction:
    """``u`` at ``v = 0`` plus the integral of the chosen probability over ``[0, v(x)]``.

    Independent of :func:`patient_choice`: integrates the step function
    ``p(v)`` rather than maximizing over contracts.
    """
    hull, slopes = menu.hull(), menu.hull_slopes()
    target = curve.value(x)
    base = max(-q for _, q in hull)
    total = Fraction(0)
    lo = Fraction(0)
    for s in list(slopes) + [None]:
        hi = target if s is None else min(max(s, Fraction(0)), target)
        if hi > lo:
            p, _ = hull[bisect_left(slopes, (lo + hi) / 2)]
            total += p * (hi - lo)
            lo = hi
    return base + total


def equilibrium_menu(curve: ValuationCurve, budget) -> LotteryMenu:
    """The waiting-time equilibrium as a menu: ``{(1, w*), (0, 0)}`` with ``w* = v(1-B)``.

    When a positive mass of patients has value exactly ``w*``, part of it is
    sent to the good hospital so that the budget is used exactly.
    """
    b = as_fraction(budget)
    if not 0 < b < 1:
        raise ContractViolation(f"budget must lie in (0, 1), got {b}")
    w_star = curve.value(1 - b)
    served = 1 - curve.last_at_most(w_star)
    ties = curve.last_at_most(w_star) - curve.first_at_least(w_star)
    fill = Fraction(0)
    if served < b and ties > 0:
        fill = (b - served) / ties
    return LotteryMenu((Contract(1, w_star), Contract(0, 0)), fill)


@dataclass(frozen=True)
class DominanceReport:
    sw_randomized: Fraction
    sw_lottery: Fraction
    realized_budget: Fraction
    concave: bool
    regular: bool
    holds: bool  # SW_r(B') >= SW_L - tolerance
    asserted: bool  # the dominance guarantee covers this curve

    @property
    def violated(self) -> bool:
        return self.asserted and not self.holds

    def to_dict(self) -> dict:
        return {
            "sw_r": _fstr(self.sw_randomized),
            "sw_l": _fstr(self.sw_lottery),
            "realized_budget": _fstr(self.realized_budget),
            "sw_r_float": float(self.sw_randomized),
            "sw_l_float": float(self.sw_lottery),
            "realized_budget_float": float(self.realized_budget),
            "concave": self.concave,
            "regular": self.regular,
            "dominance": "violated" if self.violated else ("holds" if self.holds else "fails (not asserted)"),
        }


def dominance_check(curve: ValuationCurve, menu: LotteryMenu, tolerance=DOMINANCE_TOLERANCE) -> DominanceReport:
    """Compare the menu with randomized assignment spending the same budget."""
    sw_l, spent = sw_lottery(curve, menu)
    sw_r = spent * curve.integral()  # equals sw_randomized for 0 < spent < 1
    holds = sw_r >= sw_l - as_fraction(tolerance)
    return DominanceReport(sw_r, sw_l, spent, curve.is_concave, curve.regular, holds, curve.regular)


# -- random instances ----------------------------------------------------------

def random_concave_curve(rng: random.Random, max_pieces: int = 5, denom: int = 64) -> ValuationCurve:
    """Concave curve with rational breakpoints and non-increasing nonnegative slopes."""
    n = rng.randint(1, max_pieces)
    cuts = sorted(rng.sample(range(1, denom), n - 1))
    xs = [Fraction(0)] + [Fraction(c, denom) for c in cuts] + [Fraction(1)]
    slopes = sorted((Fraction(rng.randint(0, 4 * denom), denom) for _ in range(n)), reverse=True)
    pts, v = [(Fraction(0), Fraction(0))], Fraction(0)
    for (x0, x1), s in zip(zip(xs, xs[1:]), slopes):
        v += s * (x1 - x0)
        pts.append((x1, v))
    return ValuationCurve(tuple(pts))


def random_menu(rng: random.Random, max_contracts: int = 4, denom: int = 20) -> LotteryMenu:
    n = rng.randint(1, max_contracts)
    return LotteryMenu(
        tuple(Contract(Fraction(rng.randint(0, denom), denom), Fraction(rng.randint(0, 4 * denom), denom)) for _ in range(n))
    )


def load_curve(path: str | Path) -> ValuationCurve:
    return ValuationCurve.from_dict(_load_json(path))


def load_menu(path: str | Path) -> LotteryMenu:
    return LotteryMenu.from_dict(_load_json(path))


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
