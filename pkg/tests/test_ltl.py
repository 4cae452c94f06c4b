"""Temporal-logic tests: parsing, normal forms, automata, evaluation."""
from __future__ import annotations

import random

import pytest

from distorc.ltl import (
    Always,
    And,
    Automaton,
    Eventually,
    FF,
    FormulaError,
    Implies,
    NFalse,
    NLit,
    Not,
    NRelease,
    NTrue,
    NUntil,
    Or,
    Prop,
    TT,
    Until,
    automaton,
    eval_on_lasso,
    nnf,
    parse_formula,
    props_of,
)

from gen import gen_formula, gen_lasso_word

A, B = Prop("a"), Prop("b")
PROPS = (A, B)
KEYS = ("a", "b")


# ---------------------------------------------------------------------------
# Parsing and printing


def test_parse_atoms():
    assert parse_formula("true") == TT()
    assert parse_formula("false") == FF()
    assert parse_formula("sold") == Prop("sold")
    assert parse_formula("sold(1910)") == Prop("sold", (1910,))
    assert parse_formula("pair(3, 4)") == Prop("pair", (3, 4))
    assert parse_formula("off(-3)") == Prop("off", (-3,))


def test_prop_key_naming():
    assert Prop("sold", (1910,)).key == "sold(1910)"
    assert str(Prop("sold", (1910,))) == "sold(1910)"
    assert Prop("commError").key == "commError"


def test_parse_precedence():
    assert parse_formula("a -> b -> c") == Implies(A, Implies(B, Prop("c")))
    assert parse_formula("a /\\ b \\/ c") == Or(And(A, B), Prop("c"))
    assert parse_formula("a \\/ b -> c") == Implies(Or(A, B), Prop("c"))
    assert parse_formula("a U b U c") == Until(A, Until(B, Prop("c")))
    assert parse_formula("a U b /\\ c") == And(Until(A, B), Prop("c"))
    assert parse_formula("~ a U b") == Until(Not(A), B)
    assert parse_formula("[] <> a") == Always(Eventually(A))
    assert parse_formula("~ [] a") == Not(Always(A))
    assert parse_formula("(a -> b) -> c") == Implies(Implies(A, B), Prop("c"))


@pytest.mark.parametrize(
    "src",
    ["", "a ->", "(a", "a b", "sold(x)", "a & b", "U a", "sold(", "a ) b"],
)
def test_parse_rejects(src):
    with pytest.raises(FormulaError):
        parse_formula(src)


def test_str_parse_roundtrip_random():
    for seed in range(400):
        f = gen_formula(random.Random(seed), PROPS)
        assert parse_formula(str(f)) == f, f"seed {seed}: {f}"


def test_props_of():
    f = parse_formula("[] (hasBid(1910) -> <> sold(1910))")
    assert props_of(f) == frozenset({"hasBid(1910)", "sold(1910)"})
    assert props_of(TT()) == frozenset()


# ---------------------------------------------------------------------------
# Negation normal form


def test_nnf_pushes_negation_to_atoms():
    assert nnf(Not(A)) == NLit("a", True)
    assert nnf(Not(Not(A))) == NLit("a", False)
    assert nnf(Not(Always(A))) == NUntil(NTrue(), NLit("a", True))
    assert nnf(Eventually(A), negate=True) == NRelease(NFalse(), NLit("a", True))
    assert nnf(Always(A)) == NRelease(NFalse(), NLit("a", False))


def test_nnf_double_negation_random():
    for seed in range(300):
        f = gen_formula(random.Random(seed), PROPS)
        assert nnf(Not(Not(f))) == nnf(f)
        assert nnf(Not(f)) == nnf(f, negate=True)


# ---------------------------------------------------------------------------
# Reference evaluation


def test_eval_pins():
    w = [frozenset({"a"}), frozenset()]
    assert eval_on_lasso(parse_formula("a"), w, 1)
    assert not eval_on_lasso(parse_formula("[] a"), w, 1)
    assert eval_on_lasso(parse_formula("<> a"), w, 1)
    # after the loop, a never holds again
    assert not eval_on_lasso(parse_formula("<> [] a"), w, 1)
    assert eval_on_lasso(parse_formula("a U true"), w, 1)
    assert not eval_on_lasso(parse_formula("false"), w, 0)


def test_eval_loop_positions():
    w = [frozenset(), frozenset({"a"})]
    assert eval_on_lasso(parse_formula("<> a"), w, 0)
    assert eval_on_lasso(parse_formula("[] <> a"), w, 0)
    assert not eval_on_lasso(parse_formula("<> [] a"), w, 0)


def test_eval_until_needs_left_to_hold():
    w = [frozenset({"a"}), frozenset(), frozenset({"b"})]
    assert not eval_on_lasso(parse_formula("a U b"), w, 2)
    w2 = [frozenset({"a"}), frozenset({"a"}), frozenset({"b"})]
    assert eval_on_lasso(parse_formula("a U b"), w2, 2)


def test_eval_rejects_bad_loop():
    with pytest.raises(ValueError):
        eval_on_lasso(TT(), [frozenset()], 1)


# ---------------------------------------------------------------------------
# Automaton acceptance vs direct evaluation

# An independent product construction: does the automaton accept the
# lasso word?  Kosaraju on the (node, position) product; a reachable
# cycle component must meet every acceptance set.


def accept_lasso(aut: Automaton, word, loop: int) -> bool:
    n = len(word)

    def nxt(i: int) -> int:
        return i + 1 if i + 1 < n else loop

    nodes = [(q, i) for q in range(aut.n) for i in range(n) if aut.admits(q, word[i])]
    nodeset = set(nodes)
    adj = {v: [] for v in nodes}
    radj = {v: [] for v in nodes}
    for q, i in nodes:
        for q2 in aut.edges[q]:
            w = (q2, nxt(i))
            if w in nodeset:
                adj[(q, i)].append(w)
                radj[w].append((q, i))

    start = [(q, 0) for q in aut.initial if (q, 0) in nodeset]
    reach = set()
    stack = list(start)
    while stack:
        v = stack.pop()
        if v in reach:
            continue
        reach.add(v)
        stack.extend(adj[v])

    order = []
    seen = set()
    for root in reach:
        if root in seen:
            continue
        stack = [(root, iter(adj[root]))]
        seen.add(root)
        while stack:
            v, it = stack[-1]
            pushed = False
            for w in it:
                if w in reach and w not in seen:
                    seen.add(w)
                    stack.append((w, iter(adj[w])))
                    pushed = True
                    break
            if not pushed:
                order.append(stack.pop()[0])
    comp_of = {}
    for root in reversed(order):
        if root in comp_of:
            continue
        comp = []
        stack = [root]
        while stack:
            v = stack.pop()
            if v in comp_of or v not in reach:
                continue
            comp_of[v] = root
            comp.append(v)
            stack.extend(w for w in radj[v] if w not in comp_of)
        has_edge = any(comp_of.get(w) == root for v in comp for w in adj[v])
        if len(comp) > 1 or has_edge:
            qs = {q for q, _ in comp}
            if all(qs & f for f in aut.accept):
                return True
    return False


def test_automaton_for_false_has_no_initial():
    aut = automaton(nnf(FF()))
    assert aut.initial == ()


def test_automaton_for_true_accepts_anything():
    aut = automaton(nnf(TT()))
    for seed in range(20):
        word, loop = gen_lasso_word(random.Random(seed), KEYS)
        assert accept_lasso(aut, word, loop)


def test_automaton_matches_evaluator_random():
    agreements = 0
    for seed in range(400):
        rng = random.Random(10_000 + seed)
        f = gen_formula(rng, PROPS, depth=3)
        word, loop = gen_lasso_word(rng, KEYS, max_len=5)
        want = eval_on_lasso(f, word, loop)
        assert accept_lasso(automaton(nnf(f)), word, loop) == want, f"seed {seed}: {f}"
        # the negation automaton accepts exactly the violating words
        assert accept_lasso(automaton(nnf(f, negate=True)), word, loop) == (not want)
        agreements += 1
    assert agreements == 400


def test_automaton_stays_small_on_known_shapes():
    f = parse_formula("[] (hasBid(1910) -> <> sold(1910))")
    aut = automaton(nnf(f, negate=True))
    assert 0 < aut.n <= 8
    assert aut.accept  # at least the trivial set


def test_acceptance_sets_cover_untils():
    f = parse_formula("(a U b) /\\ (b U a)")
    aut = automaton(nnf(f))
    assert len(aut.accept) == 2
