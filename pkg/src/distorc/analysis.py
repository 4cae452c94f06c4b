"""Reachability and temporal-logic checking over the simulation model.

Exploration is bounded by a time horizon: ticks are clamped so no state
passes the bound, and states at the horizon (or with nothing left to
do) behave as if they repeat forever.  Every cycle in the explored
graph is such a self-repeat, because handles and socket ids only grow
along real transitions; that is what makes lasso detection cheap.

`mc` checks a formula over all infinite runs: it builds the automaton
for the negation and searches the product on the fly.  A run that can
loop forever in a repeating state while the automaton cycles through
all its acceptance sets is a counterexample; the DFS stack gives the
finite prefix.  Formulas whose negation is "eventually <propositional>"
skip the automaton and reduce to plain reachability.

`find_earliest` answers "how soon can this predicate hold" with an
exact rational: uniform-cost search ordered by elapsed time, unbounded,
with a node cap that yields an explicitly inconclusive verdict.

Everything here dedups states by their canonical digest, which merges
states that differ only in bookkeeping a future cannot observe (handle
numbering, dead failure records, counters).  Merged states satisfy the
same predicates and generate matching futures, so verdicts and reported
traces are unaffected; the traces themselves are built from real stored
states, never from the quotient.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from .ltl import (
    Formula,
    NAnd,
    NFalse,
    NLit,
    NNF,
    NOr,
    NRelease,
    NTrue,
    NUntil,
    Prop,
    automaton,
    nnf,
)
from .simmodel import Context, GlobalState, Label, canonical_digest, close, successors
from .timebase import INF, TimeInf, fin

Valuation = Callable[[GlobalState], frozenset[str]]


# ---------------------------------------------------------------------------
# Results


@dataclass(frozen=True)
class Step:
    """One transition of a reported trace."""

    dt: Fraction
    kind: str
    detail: str
    logs: tuple[str, ...]
    elapsed: Fraction
    true_props: tuple[str, ...]


@dataclass(frozen=True)
class Holds:
    formula: str
    explored: int


@dataclass(frozen=True)
class CounterExample:
    formula: str
    explored: int
    init_index: int
    init_props: tuple[str, ...]
    steps: tuple[Step, ...]
    loops: bool  # final state repeats forever; otherwise any continuation fails


MCResult = Holds | CounterExample


@dataclass(frozen=True)
class Earliest:
    time: Fraction
    init_index: int
    steps: tuple[Step, ...]
    explored: int


@dataclass(frozen=True)
class NotReached:
    explored: int


@dataclass(frozen=True)
class Inconclusive:
    explored: int
    cap: int


SearchResult = Earliest | NotReached | Inconclusive


# ---------------------------------------------------------------------------
# Graph exploration


@dataclass
class TimedGraph:
    """The bounded state graph, materialized.  Fine for small systems
    and tests; the checkers below explore on the fly instead."""

    states: list[GlobalState]
    initial: list[int]
    edges: list[list[tuple[Label, int]]]
    repeats: list[bool]  # state has no outgoing edge and self-repeats


def explore(ctx: Context, start: GlobalState, bound: Fraction | None) -> TimedGraph:
    states: list[GlobalState] = []
    index: dict[int, int] = {}
    edges: list[list[tuple[Label, int]]] = []

    def intern(s: GlobalState) -> tuple[int, bool]:
        d = canonical_digest(s)
        if d in index:
            return index[d], False
        index[d] = len(states)
        states.append(s)
        edges.append([])
        return index[d], True

    initial = []
    todo: deque[int] = deque()
    for s0, _logs in close(ctx, start):
        i, fresh = intern(s0)
        initial.append(i)
        if fresh:
            todo.append(i)
    while todo:
        i = todo.popleft()
        s = states[i]
        for lab, s2 in successors(ctx, s, _budget(s, bound)):
            j, fresh = intern(s2)
            edges[i].append((lab, j))
            if fresh:
                todo.append(j)
    repeats = [not e for e in edges]
    return TimedGraph(states, initial, edges, repeats)


def _budget(s: GlobalState, bound: Fraction | None) -> TimeInf:
    if bound is None:
        return INF
    return fin(bound - s.elapsed)


# ---------------------------------------------------------------------------
# Propositional helpers


def eval_prop(valuation: Valuation, state: GlobalState, prop: Prop | str) -> bool:
    key = prop.key if isinstance(prop, Prop) else prop
    return key in valuation(state)


def _propositional(g: NNF) -> bool:
    match g:
        case NTrue() | NFalse() | NLit():
            return True
        case NAnd(l, r) | NOr(l, r):
            return _propositional(l) and _propositional(r)
        case _:
            return False


def _eval_nnf(g: NNF, val: frozenset[str]) -> bool:
    match g:
        case NTrue():
            return True
        case NFalse():
            return False
        case NLit(key, negated):
            return (key in val) != negated
        case NAnd(l, r):
            return _eval_nnf(l, val) and _eval_nnf(r, val)
        case NOr(l, r):
            return _eval_nnf(l, val) or _eval_nnf(r, val)
    raise ValueError("not a propositional formula")


def _safety_target(neg: NNF) -> NNF | None:
    """When the negated formula is <> psi with psi propositional, return
    psi: the check degenerates to reachability.

    A bare propositional negation does not qualify: it constrains the
    first position only, so reachability anywhere would be too strong.
    """
    match neg:
        case NUntil(NTrue(), psi) if _propositional(psi):
            return psi
    return None


# ---------------------------------------------------------------------------
# Model checking


def mc(
    ctx: Context,
    start: GlobalState,
    formula: Formula,
    bound: Fraction,
    valuation: Valuation,
) -> MCResult:
    neg = nnf(formula, negate=True)
    inits = [s for s, _ in close(ctx, start)]

    vals: dict[int, frozenset[str]] = {}
    succs: dict[int, list[tuple[Label, GlobalState]]] = {}
    by_digest: dict[int, GlobalState] = {}

    def val(s: GlobalState) -> frozenset[str]:
        d = canonical_digest(s)
        v = vals.get(d)
        if v is None:
            v = vals[d] = valuation(s)
        return v

    def succ(s: GlobalState) -> list[tuple[Label, GlobalState]]:
        d = canonical_digest(s)
        out = succs.get(d)
        if out is None:
            out = succs[d] = successors(ctx, s, fin(bound - s.elapsed))
        return out

    def register(s: GlobalState) -> int:
        d = canonical_digest(s)
        by_digest.setdefault(d, s)
        return d

    Key = tuple[int, int]  # (state digest, automaton node)
    psi = _safety_target(neg)

    if psi is not None:
        # Reachability of psi within the horizon.  Breadth-first, so the
        # reported trace is as short as possible.
        seen: set[int] = set()
        parent: dict[int, tuple[int, Label] | None] = {}
        queue: deque[int] = deque()
        init_of: dict[int, int] = {}
        for idx, s0 in enumerate(inits):
            d = register(s0)
            if d in seen:
                continue
            seen.add(d)
            parent[d] = None
            init_of[d] = idx
            queue.append(d)
        while queue:
            d = queue.popleft()
            s = by_digest[d]
            if _eval_nnf(psi, val(s)):
                steps, root = _unwind(parent, d, by_digest, val)
                return CounterExample(
                    str(formula),
                    len(seen),
                    init_of[root],
                    tuple(sorted(val(by_digest[root]))),
                    steps,
                    loops=not succ(s),
                )
            for lab, s2 in succ(s):
                d2 = register(s2)
                if d2 not in seen:
                    seen.add(d2)
                    parent[d2] = (d, lab)
                    init_of[d2] = init_of[d]
                    queue.append(d2)
        return Holds(str(formula), len(seen))

    aut = automaton(neg)
    if not aut.initial:
        return Holds(str(formula), 0)

    # Automaton nodes that, reading a fixed valuation forever, can reach
    # a cycle meeting every acceptance set.
    lasso_cache: dict[frozenset[str], frozenset[int]] = {}

    def lasso_nodes(v: frozenset[str]) -> frozenset[int]:
        got = lasso_cache.get(v)
        if got is not None:
            return got
        alive = [q for q in range(aut.n) if aut.admits(q, v)]
        aliveset = set(alive)
        adj = {q: [p for p in aut.edges[q] if p in aliveset] for q in alive}
        good: set[int] = set()
        for comp in _sccs(alive, adj):
            members = set(comp)
            has_edge = any(p in members for q in comp for p in adj[q])
            if not has_edge:
                continue
            if all(members & f for f in aut.accept):
                good |= members
        # Everything that reaches a good component is good too.
        changed = True
        while changed:
            changed = False
            for q in alive:
                if q not in good and any(p in good for p in adj[q]):
                    good.add(q)
                    changed = True
        out = frozenset(good)
        lasso_cache[v] = out
        return out

    seen_pairs: set[Key] = set()
    parent_pairs: dict[Key, tuple[Key, Label] | None] = {}
    init_of_pair: dict[Key, int] = {}
    stack: list[Key] = []
    for idx, s0 in enumerate(inits):
        d = register(s0)
        v0 = val(s0)
        for q0 in aut.initial:
            if aut.admits(q0, v0):
                k = (d, q0)
                if k not in seen_pairs:
                    seen_pairs.add(k)
                    parent_pairs[k] = None
                    init_of_pair[k] = idx
                    stack.append(k)
    while stack:
        k = stack.pop()
        d, q = k
        s = by_digest[d]
        nxt = succ(s)
        if not nxt:
            if q in lasso_nodes(val(s)):
                steps, root = _unwind_pairs(parent_pairs, k, by_digest, val)
                return CounterExample(
                    str(formula),
                    len(vals),
                    init_of_pair[root],
                    tuple(sorted(val(by_digest[root[0]]))),
                    steps,
                    loops=True,
                )
            continue
        for lab, s2 in nxt:
            d2 = register(s2)
            v2 = val(s2)
            for q2 in aut.edges[q]:
                if aut.admits(q2, v2):
                    k2 = (d2, q2)
                    if k2 not in seen_pairs:
                        seen_pairs.add(k2)
                        parent_pairs[k2] = (k, lab)
                        init_of_pair[k2] = init_of_pair[k]
                        stack.append(k2)
    return Holds(str(formula), len(vals))


def _sccs(nodes: list[int], adj: dict[int, list[int]]) -> list[list[int]]:
    """Tarjan, iterative; returns components in reverse topological order."""
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    onstack: set[int] = set()
    stack: list[int] = []
    out: list[list[int]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(adj[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        onstack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    onstack.add(w)
                    work.append((w, iter(adj[w])))
                    advanced = True
                    break
                if w in onstack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                pv = work[-1][0]
                low[pv] = min(low[pv], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    onstack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def _unwind(
    parent: dict[int, tuple[int, Label] | None],
    end: int,
    by_digest: dict[int, GlobalState],
    val: Callable[[GlobalState], frozenset[str]],
) -> tuple[tuple[Step, ...], int]:
    chain: list[tuple[int, Label]] = []
    cur = end
    while True:
        p = parent[cur]
        if p is None:
            break
        cur = p[0]
        chain.append((cur, p[1]))
    chain.reverse()
    steps = []
    for (src, lab), dst in zip(chain, [c for c, _ in chain[1:]] + [end]):
        s2 = by_digest[dst]
        steps.append(Step(lab.dt, lab.kind, lab.detail, lab.logs, s2.elapsed, tuple(sorted(val(s2)))))
    return tuple(steps), cur


def _unwind_pairs(parent, end, by_digest, val):
    chain: list[tuple[tuple[int, int], Label]] = []
    cur = end
    while True:
        p = parent[cur]
        if p is None:
            break
        cur = p[0]
        chain.append((cur, p[1]))
    chain.reverse()
    steps = []
    nodes = [c for c, _ in chain[1:]] + [end]
    for (src, lab), dst in zip(chain, nodes):
        s2 = by_digest[dst[0]]
        steps.append(Step(lab.dt, lab.kind, lab.detail, lab.logs, s2.elapsed, tuple(sorted(val(s2)))))
    return tuple(steps), cur


# ---------------------------------------------------------------------------
# Earliest reachability


def find_earliest(
    ctx: Context,
    start: GlobalState,
    target: Prop | str,
    valuation: Valuation,
    cap: int = 2_000_000,
) -> SearchResult:
    """Earliest time any state satisfying `target` is reachable.

    Uniform-cost over elapsed time with exact rationals, so the first
    satisfying state popped is earliest.  Unbounded in time; `cap`
    limits popped states and produces an honest Inconclusive when hit.
    """
    key = target.key if isinstance(target, Prop) else target
    by_digest: dict[int, GlobalState] = {}
    parent: dict[int, tuple[int, Label] | None] = {}
    init_of: dict[int, int] = {}
    done: set[int] = set()

    def val(s: GlobalState) -> frozenset[str]:
        return valuation(s)

    heap: list[tuple[Fraction, int, int]] = []
    seq = 0
    for idx, (s0, _) in enumerate(close(ctx, start)):
        d = canonical_digest(s0)
        if d in by_digest:
            continue
        by_digest[d] = s0
        parent[d] = None
        init_of[d] = idx
        heapq.heappush(heap, (s0.elapsed, seq, d))
        seq += 1
    popped = 0
    while heap:
        elapsed, _, d = heapq.heappop(heap)
        if d in done:
            continue
        done.add(d)
        popped += 1
        if popped > cap:
            return Inconclusive(popped - 1, cap)
        s = by_digest[d]
        if key in valuation(s):
            steps, root = _unwind(parent, d, by_digest, val)
            return Earliest(s.elapsed, init_of[root], steps, popped)
        for lab, s2 in successors(ctx, s):
            d2 = canonical_digest(s2)
            if d2 in done:
                continue
            if d2 not in by_digest:
                by_digest[d2] = s2
                parent[d2] = (d, lab)
                init_of[d2] = init_of[d]
                heapq.heappush(heap, (s2.elapsed, seq, d2))
                seq += 1
    return NotReached(popped)
