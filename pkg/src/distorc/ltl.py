"""Linear temporal logic over state predicates: formulas, a parser,
and translation to an automaton suitable for on-the-fly checking.

Formula syntax, loosest to tightest binding:

    f -> g        implication (right associative)
    f \\/ g       disjunction
    f /\\ g       conjunction
    f U g         until (right associative)
    [] f  <> f  ~ f   always, eventually, negation
    true  false  name  name(1910)   atoms

Atoms are named predicates with optional integer arguments; what they
mean is up to the caller, who supplies a valuation when checking.

The automaton construction is the classic tableau expansion: formulas
are first pushed to negation normal form (negations only on atoms,
with until/release as the temporal pair), then expanded into nodes
whose obligations are split between the current state and the next.
Acceptance is generalized, one set per until subformula; the checker
works with the generalized sets directly instead of degeneralizing.
"""

from __future__ import annotations

from dataclasses import dataclass, field


# ---------------------------------------------------------------------------
# Surface formulas


@dataclass(frozen=True)
class Prop:
    name: str
    args: tuple[int, ...] = ()

    @property
    def key(self) -> str:
        if not self.args:
            return self.name
        return f"{self.name}({','.join(str(a) for a in self.args)})"

    def __str__(self) -> str:
        return self.key


@dataclass(frozen=True)
class TT:
    def __str__(self) -> str:
        return "true"


@dataclass(frozen=True)
class FF:
    def __str__(self) -> str:
        return "false"


@dataclass(frozen=True)
class Not:
    sub: Formula

    def __str__(self) -> str:
        return f"~ {_paren(self.sub)}"


@dataclass(frozen=True)
class And:
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"{_paren(self.left)} /\\ {_paren(self.right)}"


@dataclass(frozen=True)
class Or:
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"{_paren(self.left)} \\/ {_paren(self.right)}"


@dataclass(frozen=True)
class Implies:
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"{_paren(self.left)} -> {_paren(self.right)}"


@dataclass(frozen=True)
class Always:
    sub: Formula

    def __str__(self) -> str:
        return f"[] {_paren(self.sub)}"


@dataclass(frozen=True)
class Eventually:
    sub: Formula

    def __str__(self) -> str:
        return f"<> {_paren(self.sub)}"


@dataclass(frozen=True)
class Until:
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"{_paren(self.left)} U {_paren(self.right)}"


Formula = Prop | TT | FF | Not | And | Or | Implies | Always | Eventually | Until


def _paren(f: Formula) -> str:
    if isinstance(f, (Prop, TT, FF)):
        return str(f)
    return f"({f})"


def props_of(f: Formula) -> frozenset[str]:
    match f:
        case Prop():
            return frozenset((f.key,))
        case Not(s) | Always(s) | Eventually(s):
            return props_of(s)
        case And(l, r) | Or(l, r) | Implies(l, r) | Until(l, r):
            return props_of(l) | props_of(r)
        case _:
            return frozenset()


# ---------------------------------------------------------------------------
# Parsing


class FormulaError(ValueError):
    pass


def _lex(src: str) -> list[str]:
    out = []
    i, n = 0, len(src)
    two = {"[]", "<>", "/\\", "\\/", "->"}
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
            continue
        if src[i : i + 2] in two:
            out.append(src[i : i + 2])
            i += 2
            continue
        if c in "~(),U":
            out.append(c)
            i += 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            out.append(src[i:j])
            i = j
            continue
        if c.isdigit() or (c == "-" and i + 1 < n and src[i + 1].isdigit()):
            j = i + 1
            while j < n and src[j].isdigit():
                j += 1
            out.append(src[i:j])
            i = j
            continue
        raise FormulaError(f"bad character {c!r} in formula")
    return out


class _FParser:
    def __init__(self, toks: list[str]):
        self.toks = toks
        self.pos = 0

    def peek(self) -> str | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self) -> str:
        t = self.peek()
        if t is None:
            raise FormulaError("unexpected end of formula")
        self.pos += 1
        return t

    def expect(self, t: str) -> None:
        got = self.take()
        if got != t:
            raise FormulaError(f"expected {t!r}, got {got!r}")

    def formula(self) -> Formula:
        left = self.disj()
        if self.peek() == "->":
            self.take()
            return Implies(left, self.formula())
        return left

    def disj(self) -> Formula:
        f = self.conj()
        while self.peek() == "\\/":
            self.take()
            f = Or(f, self.conj())
        return f

    def conj(self) -> Formula:
        f = self.until()
        while self.peek() == "/\\":
            self.take()
            f = And(f, self.until())
        return f

    def until(self) -> Formula:
        f = self.unary()
        if self.peek() == "U":
            self.take()
            return Until(f, self.until())
        return f

    def unary(self) -> Formula:
        t = self.peek()
        if t == "~":
            self.take()
            return Not(self.unary())
        if t == "[]":
            self.take()
            return Always(self.unary())
        if t == "<>":
            self.take()
            return Eventually(self.unary())
        return self.primary()

    def primary(self) -> Formula:
        t = self.take()
        if t == "(":
            f = self.formula()
            self.expect(")")
            return f
        if t == "true":
            return TT()
        if t == "false":
            return FF()
        if t[0].isalpha() or t[0] == "_":
            args: list[int] = []
            if self.peek() == "(":
                self.take()
                while True:
                    arg = self.take()
                    try:
                        args.append(int(arg))
                    except ValueError:
                        raise FormulaError(f"predicate argument must be an integer, got {arg!r}") from None
                    if self.peek() == ",":
                        self.take()
                        continue
                    break
                self.expect(")")
            return Prop(t, tuple(args))
        raise FormulaError(f"unexpected token {t!r}")


def parse_formula(src: str) -> Formula:
    p = _FParser(_lex(src))
    f = p.formula()
    if p.peek() is not None:
        raise FormulaError(f"trailing input after formula: {p.peek()!r}")
    return f


# ---------------------------------------------------------------------------
# Negation normal form

# Internal shape: literals, /\, \/, U, R.  Always and eventually unfold
# into release/until with constant sides.


@dataclass(frozen=True)
class NTrue:
    pass


@dataclass(frozen=True)
class NFalse:
    pass


@dataclass(frozen=True)
class NLit:
    key: str
    negated: bool


@dataclass(frozen=True)
class NAnd:
    left: NNF
    right: NNF


@dataclass(frozen=True)
class NOr:
    left: NNF
    right: NNF


@dataclass(frozen=True)
class NUntil:
    left: NNF
    right: NNF


@dataclass(frozen=True)
class NRelease:
    left: NNF
    right: NNF


NNF = NTrue | NFalse | NLit | NAnd | NOr | NUntil | NRelease


def nnf(f: Formula, negate: bool = False) -> NNF:
    match f:
        case TT():
            return NFalse() if negate else NTrue()
        case FF():
            return NTrue() if negate else NFalse()
        case Prop():
            return NLit(f.key, negate)
        case Not(s):
            return nnf(s, not negate)
        case And(l, r):
            cls = NOr if negate else NAnd
            return cls(nnf(l, negate), nnf(r, negate))
        case Or(l, r):
            cls = NAnd if negate else NOr
            return cls(nnf(l, negate), nnf(r, negate))
        case Implies(l, r):
            if negate:
                return NAnd(nnf(l, False), nnf(r, True))
            return NOr(nnf(l, True), nnf(r, False))
        case Always(s):
            if negate:
                return NUntil(NTrue(), nnf(s, True))
            return NRelease(NFalse(), nnf(s, False))
        case Eventually(s):
            if negate:
                return NRelease(NFalse(), nnf(s, True))
            return NUntil(NTrue(), nnf(s, False))
        case Until(l, r):
            if negate:
                return NRelease(nnf(l, True), nnf(r, True))
            return NUntil(nnf(l, False), nnf(r, False))
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Tableau expansion to a generalized Buchi automaton


@dataclass
class _TNode:
    nid: int
    incoming: set[int] = field(default_factory=set)
    new: set[NNF] = field(default_factory=set)
    old: set[NNF] = field(default_factory=set)
    nxt: set[NNF] = field(default_factory=set)


_INIT = -1


@dataclass(frozen=True)
class Automaton:
    """Generalized Buchi automaton over state valuations.

    A run sits on one node per position; the node's `pos`/`neg` sets
    must hold in that position's state.  A run is accepting when every
    set in `accept` is visited infinitely often.
    """

    n: int
    pos: tuple[frozenset[str], ...]  # per node: atoms required true
    neg: tuple[frozenset[str], ...]  # per node: atoms required false
    edges: tuple[tuple[int, ...], ...]
    initial: tuple[int, ...]
    accept: tuple[frozenset[int], ...]

    def admits(self, node: int, valuation: frozenset[str]) -> bool:
        return self.pos[node] <= valuation and not (self.neg[node] & valuation)


def automaton(f: NNF) -> Automaton:
    done: list[_TNode] = []
    counter = iter(range(1, 1 << 30))

    def expand(node: _TNode) -> None:
        while node.new:
            g = node.new.pop()
            if g in node.old:
                continue
            match g:
                case NFalse():
                    return
                case NTrue():
                    # Record it: acceptance for an until checks whether the
                    # right-hand side was processed in this node.
                    node.old.add(g)
                case NLit(key, negated):
                    if NLit(key, not negated) in node.old:
                        return
                    node.old.add(g)
                case NAnd(l, r):
                    node.old.add(g)
                    node.new |= {l, r} - node.old
                case NOr(l, r):
                    node.old.add(g)
                    twin = _TNode(next(counter), set(node.incoming), set(node.new), set(node.old), set(node.nxt))
                    twin.new.add(r)
                    node.new.add(l)
                    expand(twin)
                case NUntil(l, r):
                    node.old.add(g)
                    twin = _TNode(next(counter), set(node.incoming), set(node.new), set(node.old), set(node.nxt))
                    twin.new.add(r)
                    node.new.add(l)
                    node.nxt.add(g)
                    expand(twin)
                case NRelease(l, r):
                    node.old.add(g)
                    twin = _TNode(next(counter), set(node.incoming), set(node.new), set(node.old), set(node.nxt))
                    twin.new |= {l, r} - twin.old
                    node.new.add(r)
                    node.nxt.add(g)
                    expand(twin)
        for r in done:
            if r.old == node.old and r.nxt == node.nxt:
                r.incoming |= node.incoming
                return
        done.append(node)
        expand(_TNode(next(counter), {node.nid}, set(node.nxt), set(), set()))

    expand(_TNode(0, {_INIT}, {f}, set(), set()))

    index = {nd.nid: i for i, nd in enumerate(done)}
    n = len(done)
    pos = tuple(
        frozenset(l.key for l in nd.old if isinstance(l, NLit) and not l.negated) for nd in done
    )
    neg = tuple(
        frozenset(l.key for l in nd.old if isinstance(l, NLit) and l.negated) for nd in done
    )
    edges_sets: list[set[int]] = [set() for _ in range(n)]
    initial = []
    for i, nd in enumerate(done):
        if _INIT in nd.incoming:
            initial.append(i)
        for src in nd.incoming:
            if src in index:
                edges_sets[index[src]].add(i)

    def untils(g: NNF, acc: set[NNF]) -> None:
        match g:
            case NAnd(l, r) | NOr(l, r) | NRelease(l, r):
                untils(l, acc)
                untils(r, acc)
            case NUntil(l, r):
                acc.add(g)
                untils(l, acc)
                untils(r, acc)
            case _:
                pass

    us: set[NNF] = set()
    untils(f, us)
    accept = []
    for u in sorted(us, key=repr):
        assert isinstance(u, NUntil)
        accept.append(frozenset(i for i, nd in enumerate(done) if u not in nd.old or u.right in nd.old))
    if not accept:
        accept.append(frozenset(range(n)))

    return Automaton(
        n,
        pos,
        neg,
        tuple(tuple(sorted(s)) for s in edges_sets),
        tuple(initial),
        tuple(accept),
    )


# ---------------------------------------------------------------------------
# Direct evaluation on a lasso word (reference semantics, also used to
# confirm counterexamples)


def eval_on_lasso(f: Formula, word: list[frozenset[str]], loop: int) -> bool:
    """Evaluate on the infinite word word[0..] with word[i] = word[loop +
    (i - loop) mod (len - loop)] for i >= len.  Exact, by memoized
    recursion over (position, subformula)."""
    n = len(word)
    if not 0 <= loop < n:
        raise ValueError("loop start out of range")
    memo: dict[tuple[Formula, int], bool] = {}

    def ev(f: Formula, i: int) -> bool:
        k = (f, i)
        if k in memo:
            return memo[k]
        match f:
            case TT():
                v = True
            case FF():
                v = False
            case Prop():
                v = f.key in word[i]
            case Not(s):
                v = not ev(s, i)
            case And(l, r):
                v = ev(l, i) and ev(r, i)
            case Or(l, r):
                v = ev(l, i) or ev(r, i)
            case Implies(l, r):
                v = (not ev(l, i)) or ev(r, i)
            case Always(s):
                v = all(ev(s, j) for j in _positions(i))
            case Eventually(s):
                v = any(ev(s, j) for j in _positions(i))
            case Until(l, r):
                v = False
                for j in _positions(i):
                    if ev(r, j):
                        v = True
                        break
                    if not ev(l, j):
                        break
            case _:
                raise TypeError(f"not a formula: {f!r}")
        memo[k] = v
        return v

    def _positions(i: int) -> list[int]:
        # Every position reachable from i: the tail of the prefix plus
        # one full loop.  Enough because word[loop:] repeats forever.
        out = list(range(i, n))
        out.extend(range(loop, n))
        return out

    return ev(f, 0)
