"""Bidder-optimal stable matching for unit-demand auctions with integer values.

Hospitals with quota ``lambda_i`` become ``lambda_i`` identical goods; patients
are bidders and waiting times are prices.  :func:`stable_match` runs an
ascending exact auction: starting from zero prices it repeatedly raises, by
one unit, the prices of the smallest set of goods with maximal excess demand
until every bidder can be given a good from their demand set.  With integer
values this stops at the componentwise-minimal stable price vector, which is
the bidder-optimal matching.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from paw.errors import InvariantFailure, StructureError
from paw.model import Assignment, Instance


@dataclass(frozen=True)
class Auction:
    """``valuations[i][j]`` is bidder ``j``'s value for good ``i``.

    ``good_labels[i] = (hospital, copy)`` records which hospital a good was
    copied from; goods sharing a hospital must be identical.
    """

    valuations: tuple[tuple[int, ...], ...]
    num_bidders: int
    good_labels: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        vals = tuple(tuple(int(v) for v in row) for row in self.valuations)
        object.__setattr__(self, "valuations", vals)
        if not vals:
            raise StructureError("an auction needs at least one good")
        if self.num_bidders < 1:
            raise StructureError("an auction needs at least one bidder")
        for i, row in enumerate(vals):
            if len(row) != self.num_bidders:
                raise StructureError(f"good {i}: expected {self.num_bidders} values")
            if any(v < 0 for v in row):
                raise StructureError(f"good {i}: values must be nonnegative")
        labels = tuple(self.good_labels) or tuple((i, 0) for i in range(len(vals)))
        object.__setattr__(self, "good_labels", labels)
        if len(labels) != len(vals):
            raise StructureError("one label per good")
        first: dict[int, int] = {}
        for i, (h, _) in enumerate(labels):
            if h in first and vals[first[h]] != vals[i]:
                raise StructureError(f"goods {first[h]} and {i} share hospital {h} but differ")
            first.setdefault(h, i)

    @property
    def num_goods(self) -> int:
        return len(self.valuations)


@dataclass(frozen=True)
class Matching:
    utilities: tuple[int, ...]
    prices: tuple[int, ...]
    pairs: tuple[tuple[int, int], ...]  # (good, bidder), sorted by good

    def good_of(self) -> dict[int, int]:
        """bidder -> good for matched bidders."""
        return {b: g for g, b in self.pairs}

    def is_valid_pairing(self) -> bool:
        goods = [g for g, _ in self.pairs]
        bidders = [b for _, b in self.pairs]
        return len(set(goods)) == len(goods) and len(set(bidders)) == len(bidders)

    def is_weakly_feasible(self, auction: Auction) -> bool:
        held = self.good_of()
        for j, u in enumerate(self.utilities):
            if j in held:
                if u != auction.valuations[held[j]][j] - self.prices[held[j]]:
                    return False
            elif u != 0:
                return False
        return True

    def is_feasible(self, auction: Auction) -> bool:
        sold = {g for g, _ in self.pairs}
        return self.is_weakly_feasible(auction) and all(
            p == 0 for i, p in enumerate(self.prices) if i not in sold
        )

    def is_stable(self, auction: Auction) -> bool:
        return all(
            self.utilities[j] >= auction.valuations[i][j] - self.prices[i]
            for i in range(auction.num_goods)
            for j in range(auction.num_bidders)
        )


def _demand(vals, prices, m):
    """Per bidder: (best surplus, demanded goods in ascending order)."""
    g = len(vals)
    out = []
    for j in range(m):
        best = max(vals[i][j] - prices[i] for i in range(g))
        out.append((best, [i for i in range(g) if vals[i][j] - prices[i] == best]))
    return out


def _max_matching(adj: dict[int, list[int]], order: Sequence[int], g: int):
    """Kuhn's augmenting paths; bidders in ``order``, goods tried lowest index first."""
    mate_good: list[int | None] = [None] * g
    mate_bidder: dict[int, int] = {}

    def augment(b, seen):
        for i in adj[b]:
            if mate_good[i] is None:
                mate_good[i] = b
                mate_bidder[b] = i
                return True
        for i in adj[b]:
            if i in seen:
                continue
            seen.add(i)
            if augment(mate_good[i], seen):
                mate_good[i] = b
                mate_bidder[b] = i
                return True
        return False

    for b in order:
        augment(b, set())
    return mate_good, mate_bidder


def _excess_set(vals, prices, m):
    """Smallest set of goods with maximal excess demand, with the bidders it traps.

    Only bidders with positive surplus count; the others may always walk away.
    Returns ``(None, None, matching)`` when there is no excess demand.
    """
    g = len(vals)
    demand = _demand(vals, prices, m)
    strict = [j for j in range(m) if demand[j][0] > 0]
    adj = {j: demand[j][1] for j in strict}
    mate_good, mate_bidder = _max_matching(adj, strict, g)
    free = [j for j in strict if j not in mate_bidder]
    if not free:
        return None, None, (demand, mate_good, mate_bidder)
    goods: set[int] = set()
    trapped = list(free)
    stack = list(free)
    while stack:
        b = stack.pop()
        for i in adj[b]:
            if i not in goods:
                goods.add(i)
                partner = mate_good[i]
                if partner is None:
                    raise InvariantFailure("augmenting path left in a maximum matching")
                trapped.append(partner)
                stack.append(partner)
    return frozenset(goods), trapped, None


def _jump(vals, prices, goods, trapped):
    """How far the prices of ``goods`` can rise before a trapped bidder's demand changes."""
    g = len(vals)
    gap = None
    for j in trapped:
        inside = max(vals[i][j] - prices[i] for i in goods)
        outside = max([0] + [vals[i][j] - prices[i] for i in range(g) if i not in goods])
        d = inside - outside
        gap = d if gap is None else min(gap, d)
    return gap


def stable_match(auction: Auction) -> Matching:
    vals = auction.valuations
    g, m = auction.num_goods, auction.num_bidders
    prices = [0] * g

    while True:
        goods, trapped, final = _excess_set(vals, prices, m)
        if goods is None:
            break
        delta = _jump(vals, prices, goods, trapped)
        if delta < 1:
            raise InvariantFailure("trapped bidder is not strictly attached to its goods")
        for i in goods:
            prices[i] += 1
        if delta > 1:
            # Over [1, delta) the demand graph is frozen, so the unit steps
            # keep choosing the same set if the first one does.
            again, _, _ = _excess_set(vals, prices, m)
            if again == goods:
                for i in goods:
                    prices[i] += delta - 1

    demand, mate_good, mate_bidder = final
    _cover_priced_goods(demand, prices, mate_good, mate_bidder, g, m)

    if g >= m:
        # An unmatched bidder values every unsold (zero-price) good at 0,
        # so pairing them changes no utility.
        spare = [i for i in range(g) if mate_good[i] is None]
        for j in range(m):
            if j not in mate_bidder:
                i = spare.pop(0)
                if vals[i][j] != 0 or prices[i] != 0:
                    raise InvariantFailure(f"cannot pad bidder {j} with good {i}")
                mate_good[i] = j
                mate_bidder[j] = i

    utilities = tuple(
        vals[mate_bidder[j]][j] - prices[mate_bidder[j]] if j in mate_bidder else 0
        for j in range(m)
    )
    pairs = tuple((i, b) for i, b in enumerate(mate_good) if b is not None)
    result = Matching(utilities, tuple(prices), pairs)
    _assert_output(auction, result)
    return result


def _cover_priced_goods(demand, prices, mate_good, mate_bidder, g, m):
    """Re-route the matching so every good with a positive price is sold.

    Walks alternating paths from an unsold priced good until reaching either an
    unmatched bidder who demands it or a zero-price good that may be released.
    Bidders already matched stay matched.
    """
    demanders = [[] for _ in range(g)]
    for j in range(m):
        best, goods = demand[j]
        if best >= 0:
            for i in goods:
                demanders[i].append(j)

    def route(i, seen):
        for b in demanders[i]:
            if b in seen:
                continue
            seen.add(b)
            old = mate_bidder.get(b)
            if old is None or prices[old] == 0 or route(old, seen):
                if old is not None and mate_good[old] == b:
                    mate_good[old] = None
                mate_good[i] = b
                mate_bidder[b] = i
                return True
        return False

    for i in range(g):
        if prices[i] > 0 and mate_good[i] is None:
            if not route(i, set()):
                raise InvariantFailure(f"good {i} has price {prices[i]} but cannot be sold")


def _assert_output(auction: Auction, res: Matching) -> None:
    if not res.is_valid_pairing():
        raise InvariantFailure("a good or bidder appears twice in the matching")
    if not res.is_feasible(auction):
        raise InvariantFailure("stable_match produced an infeasible matching")
    if not res.is_stable(auction):
        raise InvariantFailure("stable_match produced an unstable matching")
    if any(u < 0 for u in res.utilities):
        raise InvariantFailure("negative utility in stable_match output")
    by_hospital: dict[int, int] = {}
    for i, (h, _) in enumerate(auction.good_labels):
        if by_hospital.setdefault(h, res.prices[i]) != res.prices[i]:
            raise InvariantFailure(f"identical goods of hospital {h} received different prices")
    if auction.num_goods >= auction.num_bidders and len(res.pairs) != auction.num_bidders:
        raise InvariantFailure("a bidder is unmatched although goods outnumber bidders")


def auction_from_quotas(instance: Instance, quotas: Sequence[int]) -> Auction:
    """One good per funded slot: hospital ``i`` contributes ``quotas[i]`` identical copies."""
    if len(quotas) != instance.k:
        raise StructureError(f"expected {instance.k} quotas, got {len(quotas)}")
    if any(q < 0 for q in quotas):
        raise StructureError("quotas must be nonnegative")
    if sum(quotas) < 1:
        raise StructureError("at least one slot is needed to build an auction")
    rows, labels = [], []
    for i, q in enumerate(quotas):
        column = tuple(instance.values[j][i] for j in range(instance.m))
        for r in range(q):
            rows.append(column)
            labels.append((i, r))
    return Auction(tuple(rows), instance.m, tuple(labels))


def extract_assignment(instance: Instance, auction: Auction, matching: Matching) -> Assignment:
    """Read waiting times and the assignment function off a bidder-optimal matching.

    A hospital with no goods in the auction gets the smallest waiting time
    that keeps every patient at least as happy where they are,
    ``max(0, max_j (v_ij - u_j))``.
    """
    held = matching.good_of()
    if len(held) != instance.m:
        missing = [j for j in range(instance.m) if j not in held]
        raise InvariantFailure(f"bidders {missing} unmatched; extraction needs a perfect side")
    waits = []
    for i in range(instance.k):
        copies = [g for g, (h, _) in enumerate(auction.good_labels) if h == i]
        if copies:
            waits.append(matching.prices[copies[0]])
        else:
            waits.append(max(0, max(instance.values[j][i] - matching.utilities[j] for j in range(instance.m))))
    h = [auction.good_labels[held[j]][0] for j in range(instance.m)]
    out = Assignment.from_choice(waits, h, instance.k)
    for j in range(instance.m):
        if instance.values[j][h[j]] - out.waiting_times[h[j]] != matching.utilities[j]:
            raise InvariantFailure(f"patient {j}: extracted utility differs from the matching")
    return out


def assignment_for_quotas(instance: Instance, quotas: Sequence[int]) -> Assignment:
    """Build the auction for ``quotas`` and extract its bidder-optimal assignment (``sum(quotas) >= m``)."""
    if sum(quotas) < instance.m:
        raise StructureError("quotas must cover every patient")
    auction = auction_from_quotas(instance, quotas)
    return extract_assignment(instance, auction, stable_match(auction))
