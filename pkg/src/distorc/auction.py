"""The auction case study: an orchestration that posts items for sale,
runs timed bidding rounds, and announces winners, together with the
site behaviors it talks to and the predicates and formulas used to
analyze it.

The deployment has six nodes: two expression nodes (one posting items,
one running the bidding loop) and four served sites.  A seller hands
out items on request; a bidders site answers with the offers above the
current bid, each a (bid, bidder) pair; a max-bid site picks the
highest offer; the auction site holds posted items, parks a post until
its item is won (posting an item blocks until bidding on it ends), and
records winners.

Bidding runs in rounds of at most one time unit: each round asks the
bidders for offers and races the answer against a timer.  A round that
times out burns its share of the auction duration without changing
the standing bid; a round that completes adopts the best offer.  When
the duration is spent the standing (bid, bidder) pair is published,
and a real winner is announced to the auction site.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .ltl import Always, And, Eventually, Formula, Implies, Not, Prop
from .machine import ExprNode, Loc, SiteNode, build_defs
from .simmodel import Context, GlobalState, SrvReq, init_servers, make_context, new_system
from .sites import Reply, register_behavior
from .syntax import Par, parse_program
from .values import SIGNAL, Int, RemoteSite, Str, TupleV

PROGRAM_SRC = """
Posting(seller) =def
  seller("postNext") >x> Auction("post", x) >> rtimer(1) >> Posting(seller) ;

Bidding =def
  Auction("getNext") >(id, d, m)>
  Bids(id, d, m, 0) >(wb, wn)>
  ( if(wn = 0) >> Bidding()
  | if(wn != 0) >> Auction("won", wn, id, wb) >> Bidding() ) ;

Bids(id, d, wb, wn) =def
  ( if(d <= 0) >> let(wb, wn)
  | if(d > 0) >> clock() >ta> min(d, 1) >t> TimeoutRound(id, wb, t) >x>
      ( if(x = signal) >> Bids(id, d - t, wb, wn)
      | if(x != signal) >> rtimer(1) >> clock() >tb>
          Bids(id, d - (tb - ta), x.0, x.1) ) ) ;

TimeoutRound(id, bid, t) =def
  let(x) <x< ( rtimer(t) | Bidders("nextBidList", id, bid) >bl> MaxBid(bl) ) ;

Posting(Seller) | Bidding
"""

DEFAULT_ITEMS = ((1910, 5, 500), (1720, 7, 700))
DEFAULT_BIDDERS = ((1, 700, 50), (2, 800, 75), (3, 1000, 100))

SITE_ADDRS = {
    "Seller": ("10.0.0.4", 44800),
    "Auction": ("10.0.0.5", 44600),
    "Bidders": ("10.0.0.6", 44900),
    "MaxBid": ("10.0.0.7", 44950),
}
POSTING_ADDR = ("10.0.0.2", 44200)
BIDDING_ADDR = ("10.0.0.3", 44400)

# pid layout used by every system built here
PID_POSTING, PID_BIDDING, PID_SELLER, PID_BIDDERS, PID_MAXBID, PID_AUCTION = range(6)


def _item_const(item: tuple[int, int, int]) -> TupleV:
    return TupleV(tuple(Int(x) for x in item))


# ---------------------------------------------------------------------------
# Site behaviors


@dataclass(frozen=True)
class SellerSite:
    """Hands out items first to last; silent once the list is empty."""

    name: str = "seller"

    def initial_state(self):
        return DEFAULT_ITEMS

    def handle(self, state, token, payload):
        if payload != Str("postNext") or not state:
            return state, (), ('Received "postNext"',)
        head, rest = state[0], state[1:]
        return rest, (Reply(token, _item_const(head)),), ('Received "postNext"',)


@dataclass(frozen=True)
class BiddersSite:
    """Answers with every offer above the current bid.

    Each bidder raises by its increment, capped at its maximum, and
    abstains when that does not beat the standing bid.  Offers are
    recorded when the request is served, so an item has bids even if
    the answer is lost on the way back.
    """

    name: str = "bidders"

    def initial_state(self):
        return (DEFAULT_BIDDERS, ())

    def handle(self, state, token, payload):
        script, recorded = state
        match payload:
            case TupleV((Str("nextBidList"), Int(item), Int(cur))):
                pass
            case _:
                return state, (), ('Received "nextBidList"',)
        offers = []
        for num, top, inc in script:
            offer = min(cur + inc, top)
            if offer > cur:
                offers.append((offer, num))
        recorded = recorded + tuple((item, num, bid) for bid, num in offers)
        answer = TupleV(tuple(TupleV((Int(bid), Int(num))) for bid, num in offers))
        return (script, recorded), (Reply(token, answer),), ('Received "nextBidList"',)

    def canonical(self, state, rename):
        # Replies are computed from the request alone and predicates
        # only ask which items have bids, so the record log collapses
        # to that set.
        script, recorded = state
        return script, tuple(sorted({item for item, _num, _bid in recorded}))


@dataclass(frozen=True)
class MaxBidSite:
    """Picks the highest (bid, bidder) pair; ties go to the lowest
    bidder number.  Silent on an empty or malformed list."""

    name: str = "maxbid"

    def initial_state(self):
        return ()

    def handle(self, state, token, payload):
        match payload:
            case TupleV(pairs) if pairs:
                best: tuple[int, int] | None = None
                for p in pairs:
                    match p:
                        case TupleV((Int(bid), Int(num))):
                            if best is None or (bid, -num) > (best[0], -best[1]):
                                best = (bid, num)
                        case _:
                            return state, (), ("Ignoring malformed bid list",)
                assert best is not None
                answer = TupleV((Int(best[0]), Int(best[1])))
                return state, (Reply(token, answer),), (f"Max of {len(pairs)} bids",)
        return state, (), ("Ignoring empty bid list",)


# Auction site state: (pending items, winner records, parked posts,
# parked getNext tokens).  A post is acknowledged only when its item is
# won; a getNext with no item waits for the next post.
_AUCTION_INIT = ((), (), (), ())


@dataclass(frozen=True)
class AuctionSite:
    name: str = "auction"

    def initial_state(self):
        return _AUCTION_INIT

    def handle(self, state, token, payload):
        pending, winners, posts, gets = state
        logs: list[str] = []
        replies: list[Reply] = []
        match payload:
            case Str("getNext"):
                logs.append('Received "getNext"')
                if pending:
                    item, pending = pending[0], pending[1:]
                    replies.append(Reply(token, _item_const(item)))
                    logs.append(f"Bidding to start for {item[0]}")
                else:
                    gets = gets + (token,)
            case TupleV((Str("post"), TupleV((Int(ident), Int(dur), Int(start))))):
                logs.append('Received "post"')
                logs.append(f"Item {ident} posted")
                pending = pending + ((ident, dur, start),)
                posts = posts + ((token, ident),)
                if gets:
                    waiter, gets = gets[0], gets[1:]
                    item, pending = pending[0], pending[1:]
                    replies.append(Reply(waiter, _item_const(item)))
                    logs.append(f"Bidding to start for {item[0]}")
            case TupleV((Str("won"), Int(num), Int(ident), Int(bid))):
                logs.append('Received "won"')
                logs.append(f"Item {ident} won by Bidder {num}")
                winners = winners + ((num, ident, bid),)
                replies.append(Reply(token, SIGNAL))
                still = []
                for ptoken, pident in posts:
                    if pident == ident:
                        replies.append(Reply(ptoken, SIGNAL))
                    else:
                        still.append((ptoken, pident))
                posts = tuple(still)
            case _:
                logs.append("Ignoring unknown request")
        return (pending, winners, posts, gets), tuple(replies), tuple(logs)

    def canonical(self, state, rename):
        # Winner records are never read back; predicates ask who won
        # what, not at which price, so prices drop out.  Parked tokens
        # are socket names and get the caller's renaming.
        pending, winners, posts, gets = state
        return (
            pending,
            tuple(sorted({(item, num) for num, item, _bid in winners})),
            tuple((rename(t), item) for t, item in posts),
            tuple(rename(t) for t in gets),
        )


register_behavior(SellerSite())
register_behavior(BiddersSite())
register_behavior(MaxBidSite())
register_behavior(AuctionSite())


# ---------------------------------------------------------------------------
# System construction


def build_program():
    return parse_program(PROGRAM_SRC)


def initial(
    ds,
    explore_errors: bool = True,
    items: tuple[tuple[int, int, int], ...] = DEFAULT_ITEMS,
    bidders: tuple[tuple[int, int, int], ...] = DEFAULT_BIDDERS,
) -> tuple[Context, GlobalState]:
    """The deployed auction system, ready for closure and exploration.

    `ds` is the delay set (TimeInf values or anything `parse_time`
    accepts already converted); every frame exchanged picks its delay
    from this set.
    """
    env = {name: RemoteSite(host, port) for name, (host, port) in SITE_ADDRS.items()}
    defs, main = build_defs(build_program(), env)
    match main:
        case Par(post_expr, bid_expr):
            pass
        case _:
            raise AssertionError("goal expression must be a two-way parallel")
    zero = Fraction(0)
    nodes = (
        ExprNode(Loc(*POSTING_ADDR), zero, post_expr),
        ExprNode(Loc(*BIDDING_ADDR), zero, bid_expr),
        SiteNode(Loc(*SITE_ADDRS["Seller"]), zero, "seller", items),
        SiteNode(Loc(*SITE_ADDRS["Bidders"]), zero, "bidders", (bidders, ())),
        SiteNode(Loc(*SITE_ADDRS["MaxBid"]), zero, "maxbid", ()),
        SiteNode(Loc(*SITE_ADDRS["Auction"]), zero, "auction", _AUCTION_INIT),
    )
    reqs = tuple(
        SrvReq(pid, nodes[pid].loc.port)
        for pid in (PID_SELLER, PID_BIDDERS, PID_MAXBID, PID_AUCTION)
    )
    state = init_servers(new_system(nodes, reqs))
    ctx = make_context(defs, ds, explore_errors)
    return ctx, state


REDUCED_ITEMS = ((1910, 2, 500),)
REDUCED_BIDDERS = ((3, 700, 100),)


def reduced_initial(ds, explore_errors: bool = True) -> tuple[Context, GlobalState]:
    """A one-item, one-bidder instance small enough for brute-force
    cross-checks."""
    return initial(ds, explore_errors, REDUCED_ITEMS, REDUCED_BIDDERS)


# ---------------------------------------------------------------------------
# Predicates over states


def valuation(st: GlobalState) -> frozenset[str]:
    keys = set()
    if st.errors:
        keys.add("commError")
    _, recorded = st.procs[PID_BIDDERS].site_state
    for item, _num, _bid in recorded:
        keys.add(f"hasBid({item})")
    _, winners, _, _ = st.procs[PID_AUCTION].site_state
    for num, item, _bid in winners:
        keys.add(f"sold({item})")
    by_item: dict[int, set[int]] = {}
    for num, item, _bid in winners:
        by_item.setdefault(item, set()).add(num)
    for item, nums in by_item.items():
        if len(nums) > 1:
            keys.add(f"conflict({item})")
    return frozenset(keys)


# ---------------------------------------------------------------------------
# Formulas


def commit(item: int) -> Formula:
    return Implies(Prop("hasBid", (item,)), Eventually(Prop("sold", (item,))))


def unique_winner(item: int) -> Formula:
    return Not(Prop("conflict", (item,)))


def _conj(fs: list[Formula]) -> Formula:
    out = fs[0]
    for f in fs[1:]:
        out = And(out, f)
    return out


def formulas(items: tuple[tuple[int, int, int], ...] = DEFAULT_ITEMS) -> dict[str, Formula]:
    ids = [it[0] for it in items]
    named: dict[str, Formula] = {}
    for i in ids:
        named[f"commit({i})"] = commit(i)
        named[f"uniqueWinner({i})"] = unique_winner(i)
    named["commitAllNoErrors"] = Implies(
        Always(Not(Prop("commError"))),
        Always(_conj([commit(i) for i in ids])),
    )
    named["uniqueWinnerAll"] = Always(_conj([unique_winner(i) for i in ids]))
    return named
