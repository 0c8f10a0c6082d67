import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import minimal_stable_prices
from paw.errors import StructureError
from paw.matching import Auction, Matching, auction_from_quotas, assignment_for_quotas, stable_match
from paw.model import Instance, check_equilibrium


def random_auction(rng: random.Random, max_goods=4, max_bidders=4, max_value=12) -> Auction:
    g = rng.randint(1, max_goods)
    m = rng.randint(1, max_bidders)
    if rng.random() < 0.4:
        # duplicate some goods so identical copies show up
        base = [tuple(rng.randint(0, max_value) for _ in range(m)) for _ in range(rng.randint(1, g))]
        owner = sorted(rng.randrange(len(base)) for _ in range(g))
        counts: dict[int, int] = {}
        labels = []
        for h in owner:
            labels.append((h, counts.get(h, 0)))
            counts[h] = counts.get(h, 0) + 1
        return Auction(tuple(base[h] for h in owner), m, tuple(labels))
    return Auction(tuple(tuple(rng.randint(0, max_value) for _ in range(m)) for _ in range(g)), m)


auctions = st.builds(
    lambda seed: random_auction(random.Random(seed), max_goods=3, max_bidders=3, max_value=8),
    st.integers(0, 10**9),
)


def test_single_good_second_price():
    res = stable_match(Auction(((7, 4, 9),), 3))
    assert res.prices == (7,)
    assert res.pairs == ((0, 2),)
    assert res.utilities == (0, 0, 2)


def test_identical_copies_share_price():
    auction = Auction(((5, 3, 8), (5, 3, 8)), 3, ((0, 0), (0, 1)))
    res = stable_match(auction)
    # two copies, three bidders: the price settles at the lowest value
    assert res.prices == (3, 3)
    assert res.utilities == (2, 0, 5)


def test_more_goods_than_bidders_no_competition():
    res = stable_match(Auction(((3, 1), (2, 6), (0, 0)), 2))
    assert res.prices == (0, 0, 0)
    assert res.utilities == (3, 6)


def test_mismatched_identical_goods_rejected():
    with pytest.raises(StructureError):
        Auction(((1, 2), (2, 1)), 2, ((0, 0), (0, 1)))


def test_feasibility_predicates():
    auction = Auction(((4,), (2,)), 1)
    good = Matching((4,), (0, 0), ((0, 0),))
    assert good.is_feasible(auction) and good.is_stable(auction)
    unsold_priced = Matching((4,), (0, 1), ((0, 0),))
    assert unsold_priced.is_weakly_feasible(auction)
    assert not unsold_priced.is_feasible(auction)
    envious = Matching((2,), (0, 0), ((1, 0),))
    assert not envious.is_stable(auction)


@pytest.mark.parametrize("seed", range(40))
def test_matches_exhaustive_oracle(seed):
    auction = random_auction(random.Random(seed))
    res = stable_match(auction)
    prices, utilities, attained = minimal_stable_prices(auction)
    assert attained
    assert res.prices == prices
    assert res.utilities == utilities


@given(auctions)
def test_output_is_feasible_and_stable(auction):
    res = stable_match(auction)
    assert res.is_valid_pairing()
    assert res.is_feasible(auction)
    assert res.is_stable(auction)
    assert all(u >= 0 for u in res.utilities)


@given(auctions)
def test_identical_goods_equal_prices(auction):
    res = stable_match(auction)
    seen = {}
    for i, (h, _) in enumerate(auction.good_labels):
        assert seen.setdefault(h, res.prices[i]) == res.prices[i]


@given(auctions, st.integers(0, 8))
def test_extra_copy_does_not_hurt_bidders(auction, extra):
    """Adding a good can only lower minimal prices, so utilities cannot drop."""
    m = auction.num_bidders
    new_good = tuple((extra + j) % 9 for j in range(m))
    bigger = Auction(auction.valuations + (new_good,), m, auction.good_labels + ((10**6, 0),))
    before, after = stable_match(auction), stable_match(bigger)
    assert all(a >= b for a, b in zip(after.utilities, before.utilities))
    assert all(a <= b for a, b in zip(after.prices, before.prices))


def test_extraction_from_quotas(scarce):
    a = assignment_for_quotas(scarce, (2, 1))
    assert a.waiting_times == (0, 7)
    assert a.assignment == (1, 0, 0)
    assert check_equilibrium(scarce, a) == []


def test_zero_quota_hospital_is_unattractive():
    inst = Instance((1, 5), ((3, 9), (2, 4)), 2)
    a = assignment_for_quotas(inst, (2, 0))
    # smallest wait keeping both patients away: max(9 - 3, 4 - 2)
    assert a.waiting_times[1] == 6
    assert a.assignment == (0, 0)
    assert [v for v in check_equilibrium(inst, a) if v.kind != "budget"] == []


def test_auction_from_quotas_layout(scarce):
    auction = auction_from_quotas(scarce, (1, 2))
    assert auction.valuations == ((0, 0, 0), (10, 7, 3), (10, 7, 3))
    assert auction.good_labels == ((0, 0), (1, 0), (1, 1))


def test_single_pair_zero_price():
    res = stable_match(Auction(((5,),), 1))
    assert (res.utilities, res.prices, res.pairs) == ((5,), (0,), ((0, 0),))


def test_supply_meets_demand():
    res = stable_match(Auction(((10, 7), (10, 7)), 2, ((0, 0), (0, 1))))
    assert res.prices == (0, 0)
    assert res.utilities == (10, 7)
    assert len(res.pairs) == 2


def test_scarce_auction_with_spare_free_copies(scarce):
    res = stable_match(auction_from_quotas(scarce, (3, 1)))
    assert res.prices == (0, 0, 0, 7)
    assert res.utilities == (3, 0, 0)
    assert (3, 0) in res.pairs


def test_correlated_auction_is_the_value_matrix(correlated):
    plain, _ = correlated
    auction = auction_from_quotas(plain, (1, 1))
    assert auction.valuations == ((10, 4), (0, 6))
    assert stable_match(auction).prices == (0, 0)
