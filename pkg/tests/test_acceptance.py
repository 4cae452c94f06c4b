"""Acceptance checks: the end-to-end claims this package stands behind.

One test per criterion; each prints a single PASS/FAIL line, echoed in
the terminal summary.  Everything heavier than a unit test lives here:
bounded verdicts over the full auction, the exact earliest-sale time,
randomized parser and time-algebra volume runs, the transition-relation
cross-check, and a live six-node deployment over loopback.
"""
from __future__ import annotations

import random
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path

from distorc import auction
from distorc.analysis import CounterExample, Earliest, Holds, explore, find_earliest, mc
from distorc.machine import ExprNode, Loc, RPublish, RTimer, node_delta, node_mte, normalize
from distorc.simmodel import raw_successors, state_digest
from distorc.syntax import Par, Seq, Silent, Where, parse_expression, pretty
from distorc.timebase import INF, ZERO, TimeInf, fin, min_time
from distorc.values import Int

from gen import DECL_POOL, gen_core_expr
from naive import brute_force_mc, naive_successors, reachable_set
from scenarios import RAW_SCENARIOS

RESULTS: list[str] = []

BOUND = Fraction(15)


def report(tag: str, ok: bool, detail: str) -> None:
    line = f"{tag}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


def verdict(ds_member: Fraction | TimeInf, formula_name: str):
    ds = (ds_member if isinstance(ds_member, TimeInf) else fin(ds_member),)
    ctx, st = auction.initial(ds=ds)
    f = auction.formulas()[formula_name]
    return mc(ctx, st, f, BOUND, auction.valuation)


def test_c1_commit_holds_at_small_delay():
    r = verdict(Fraction(1, 10), "commitAllNoErrors")
    report(
        "C1 commitAllNoErrors, delay 1/10, bound 15",
        isinstance(r, Holds),
        f"{type(r).__name__}, {r.explored} states",
    )


def test_c2_commit_verdicts_flip_between_quarter_and_fifth():
    quarter = verdict(Fraction(1, 4), "commitAllNoErrors")
    fifth = verdict(Fraction(1, 5), "commitAllNoErrors")
    ok = isinstance(quarter, CounterExample) and isinstance(fifth, Holds)
    report(
        "C2 commitAllNoErrors at delays 1/4 and 1/5",
        ok,
        f"1/4: {type(quarter).__name__} (want CounterExample); "
        f"1/5: {type(fifth).__name__} (want Holds; the earliest possible "
        f"error-free sale of item 1720 is 78/5, past the bound)",
    )


def test_c3_unique_winner_holds_at_small_delay():
    r = verdict(Fraction(1, 10), "uniqueWinnerAll")
    report(
        "C3 uniqueWinnerAll, delay 1/10, bound 15",
        isinstance(r, Holds),
        f"{type(r).__name__}, {r.explored} states",
    )


def test_c4_earliest_first_sale_is_eleven_halves():
    ctx, st = auction.initial(ds=(fin(Fraction(1, 10)),))
    r = find_earliest(ctx, st, "sold(1910)", auction.valuation)
    ok = isinstance(r, Earliest) and r.time == Fraction(11, 2) and 5 <= r.time <= 6
    # independent check: scan the bounded graph for the same minimum
    g = explore(ctx, st, Fraction(8))
    times = [s.elapsed for s in g.states if "sold(1910)" in auction.valuation(s)]
    ok = ok and times and min(times) == Fraction(11, 2)
    report(
        "C4 earliest sold(1910), delay 1/10",
        bool(ok),
        f"search: {getattr(r, 'time', None)}; graph scan over {len(g.states)} "
        f"states: {min(times) if times else None}",
    )


def test_c5_randomized_parser_volume():
    t0 = time.monotonic()
    cases = 10_000
    for seed in range(cases):
        e = gen_core_expr(random.Random(seed))
        back = parse_expression(pretty(e), decls=DECL_POOL)
        assert back == e, f"seed {seed}"
        if seed % 5 == 0:
            n = normalize(e)
            assert normalize(n) == n, f"seed {seed}: normalize not idempotent"
    secs = time.monotonic() - t0
    report(
        "C5 randomized print/parse agreement",
        secs < 60.0,
        f"{cases} terms in {secs:.1f}s",
    )


def _rand_time(rng: random.Random, allow_inf: bool = True) -> TimeInf:
    if allow_inf and rng.random() < 0.15:
        return INF
    return fin(Fraction(rng.randrange(0, 40), rng.randrange(1, 8)))


def _rand_timer_tree(rng: random.Random, depth: int):
    if depth == 0 or rng.random() < 0.35:
        k = rng.randrange(3)
        if k == 0:
            return RTimer(_rand_time(rng, allow_inf=False), Int(rng.randrange(5)))
        if k == 1:
            return RPublish(Int(rng.randrange(5)))
        return Silent()
    left = _rand_timer_tree(rng, depth - 1)
    right = _rand_timer_tree(rng, depth - 1)
    k = rng.randrange(3)
    if k == 0:
        return Par(left, right)
    if k == 1:
        return Seq(left, "u", right)
    return Where(left, "v", right)


def test_c6_randomized_time_algebra_volume():
    t0 = time.monotonic()
    loc = Loc("t", 1)
    cases = 10_000
    for seed in range(cases):
        rng = random.Random(40_000 + seed)
        if seed % 2 == 0:
            a, b, c = (_rand_time(rng) for _ in range(3))
            assert (a + b) + c == a + (b + c)
            assert a + b == b + a
            assert a + INF == INF and INF.monus(a) in (INF, ZERO)
            assert a.monus(b) == ZERO if a <= b else a.monus(b) + b == a
            assert min_time([a, b]) <= a and min_time([a, b]) <= b
            assert (a < b) + (a == b) + (b < a) == 1
        else:
            node = ExprNode(loc, Fraction(0), _rand_timer_tree(rng, 3))
            m = node_mte(node)
            d1 = fin(Fraction(rng.randrange(0, 12), rng.randrange(1, 6)))
            d2 = fin(Fraction(rng.randrange(0, 12), rng.randrange(1, 6)))
            two_step = node_delta(node_delta(node, d1), d2)
            assert two_step == node_delta(node, d1 + d2)
            assert node_mte(node_delta(node, d1)) == m.monus(d1)
    secs = time.monotonic() - t0
    report(
        "C6 randomized time algebra",
        secs < 60.0,
        f"{cases} cases in {secs:.1f}s",
    )


def test_c7_transition_relation_matches_reference():
    horizon = Fraction(6)
    total = 0
    for name, build in sorted(RAW_SCENARIOS.items()):
        ctx, st = build()
        raw = reachable_set(
            lambda c, s: [s2 for _lab, s2 in raw_successors(c, s)], ctx, st, horizon
        )
        ref = reachable_set(naive_successors, ctx, st, horizon)
        assert set(raw) == set(ref), name
        fused = explore(ctx, st, horizon)
        assert {state_digest(s) for s in fused.states} <= set(raw), name
        total += len(ref)
    report(
        "C7 transition relation vs independent reference",
        True,
        f"{len(RAW_SCENARIOS)} systems, {total} states agree",
    )


def _tick_gap(lines: list[str], after: str, until: str) -> int | None:
    start = next((i for i, l in enumerate(lines) if after in l), None)
    end = next((i for i, l in enumerate(lines) if until in l), None)
    if start is None or end is None or end < start:
        return None
    return sum(1 for l in lines[start:end] if l.strip() == "Tick!")


def test_c8_live_deployment_over_loopback(tmp_path):
    deploy = Path(__file__).resolve().parent.parent / "deploy"
    procs: list[tuple[subprocess.Popen, object]] = []

    def start(name: str) -> None:
        out = open(tmp_path / f"{name}.log", "wb")
        p = subprocess.Popen(
            [sys.executable, "-m", "distorc", "node", f"{name}.json", "--with-ticker"],
            cwd=deploy,
            stdout=out,
            stderr=subprocess.STDOUT,
        )
        procs.append((p, out))

    site_log = tmp_path / "auction-site.log"
    try:
        for name in ("seller", "bidders", "maxbid", "auction-site"):
            start(name)
        time.sleep(1.5)
        t0 = time.monotonic()
        for name in ("posting", "bidding"):
            start(name)

        posted_at = None
        deadline = t0 + 90.0
        text = ""
        while time.monotonic() < deadline:
            text = site_log.read_text(errors="replace") if site_log.exists() else ""
            if posted_at is None and "Item 1910 posted" in text:
                posted_at = time.monotonic() - t0
            if "Item 1720 won by" in text:
                break
            time.sleep(0.5)
    finally:
        for p, out in procs:
            p.terminate()
        for p, out in procs:
            try:
                p.wait(timeout=5)
            except subprocess.TimeoutExpired:
                p.kill()
            out.close()

    lines = text.splitlines()
    order = [
        "Item 1910 posted",
        "Bidding to start for 1910",
        "Item 1910 won by Bidder 3",
        "Item 1720 posted",
        "Bidding to start for 1720",
        "Item 1720 won by Bidder 3",
    ]
    positions = [next((i for i, l in enumerate(lines) if want in l), None) for want in order]
    in_order = None not in positions and positions == sorted(positions)
    gap1910 = _tick_gap(lines, "Item 1910 posted", "Item 1910 won by")
    gap1720 = _tick_gap(lines, "Item 1720 posted", "Item 1720 won by")
    ok = (
        in_order
        and posted_at is not None
        and posted_at < 20.0
        and gap1910 is not None
        and 5 <= gap1910 <= 7
        and gap1720 is not None
        and 4 <= gap1720 <= 8
    )
    report(
        "C8 live six-node run, 1s ticks",
        bool(ok),
        f"posted after {posted_at if posted_at is None else round(posted_at, 1)}s, "
        f"event order {'ok' if in_order else 'WRONG'}, "
        f"tick gaps {gap1910} (item 1910) and {gap1720} (item 1720)",
    )


def test_c9_reduced_verdict_matches_brute_force():
    ds = (ZERO, INF)
    ctx, st = auction.reduced_initial(ds=ds)
    f = auction.formulas(auction.REDUCED_ITEMS)["commitAllNoErrors"]
    got = mc(ctx, st, f, BOUND, auction.valuation)
    want = brute_force_mc(ctx, st, f, BOUND, auction.valuation)
    agree = isinstance(got, Holds) == want
    report(
        "C9 reduced instance vs brute force",
        agree,
        f"checker: {type(got).__name__}; reference: {'Holds' if want else 'CounterExample'}",
    )
