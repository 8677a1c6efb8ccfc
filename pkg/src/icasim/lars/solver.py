"""LARS programs: parsing, grounding, reduct, model checks and answer streams.

Two evaluation routes are provided and are intentionally independent:

* :func:`answer_streams_bruteforce` searches the space of interpretation
  streams and keeps the minimal models of the reduct (the definition).
* :func:`answer_stream_stratified` computes the unique answer stream of a
  stratified program by layered least-fixpoint iteration.
"""

from __future__ import annotations

import itertools
import operator
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

from .core import (
    And,
    At,
    Atom,
    AtomNode,
    Box,
    Diamond,
    Formula,
    Implies,
    LarsError,
    Not,
    Or,
    PreconditionError,
    Stream,
    Structure,
    Timeline,
    Window,
    _term_key,
    entails,
)


class LarsSyntaxError(LarsError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SafetyError(LarsError):
    def __init__(self, message: str, variable: str | None = None):
        super().__init__(message)
        self.variable = variable


class StratificationError(LarsError):
    pass


class CapacityError(LarsError):
    pass


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


_OPS = {
    "<": operator.lt,
    "<=": operator.le,
    ">=": operator.ge,
    ">": operator.gt,
    "=": operator.eq,
    "!=": operator.ne,
}


@dataclass(frozen=True)
class Comparison:
    left: object
    op: str
    right: object

    def __str__(self):
        return f"{self.left} {self.op} {self.right}"

    def evaluate(self) -> bool:
        if isinstance(self.left, Var) or isinstance(self.right, Var):
            raise LarsError(f"comparison {self} is not ground")
        if self.op in ("=", "!="):
            return _OPS[self.op](self.left, self.right)
        return _OPS[self.op](_term_key(self.left), _term_key(self.right))


@dataclass(frozen=True)
class Literal:
    """A body element: a formula (optionally under ``not``) or a comparison."""

    formula: Union[Formula, Comparison]
    naf: bool = False

    @property
    def is_comparison(self) -> bool:
        return isinstance(self.formula, Comparison)

    def __str__(self):
        return f"not {self.formula}" if self.naf else str(self.formula)


@dataclass(frozen=True)
class Rule:
    head: Formula  # AtomNode or At(time, AtomNode)
    body: tuple = ()

    def __str__(self):
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- {', '.join(str(b) for b in self.body)}."

    @property
    def head_atom(self) -> Atom:
        return self.head.sub.atom if isinstance(self.head, At) else self.head.atom


@dataclass(frozen=True)
class Program:
    rules: tuple
    extensional: frozenset = frozenset()

    @property
    def intensional(self) -> frozenset:
        return frozenset(r.head_atom.predicate for r in self.rules)

    def max_window(self) -> int:
        sizes = [0]
        for r in self.rules:
            for lit in r.body:
                if not lit.is_comparison:
                    sizes.extend(_window_sizes(lit.formula))
        return max(sizes)

    def __str__(self):
        return "\n".join(str(r) for r in self.rules)


@dataclass(frozen=True)
class GroundProgram:
    rules: tuple = ()

    def __iter__(self):
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)

    def __contains__(self, rule):
        return rule in self.rules

    def __eq__(self, other):
        if not isinstance(other, GroundProgram):
            return NotImplemented
        return set(self.rules) == set(other.rules)

    def __hash__(self):
        return hash(frozenset(self.rules))


def _window_sizes(f) -> Iterator[int]:
    if isinstance(f, Window):
        yield f.k
    for child in _children(f):
        yield from _window_sizes(child)


def _children(f) -> tuple:
    if isinstance(f, (Not, Diamond, Box, At, Window)):
        return (f.sub,)
    if isinstance(f, (And, Or, Implies)):
        return (f.left, f.right)
    return ()


# -- parsing -------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>%[^\n]*)
  | (?P<directive>\#[a-z]+)
  | (?P<int>\d+)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<ident>[a-z][A-Za-z0-9_]*)
  | (?P<op>:-|->|<=|>=|!=|<|>|=|[(),.\[\]~-])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"not", "in", "always", "sometime", "at", "and", "or"}
_CMP_OPS = {"<", "<=", ">=", ">", "=", "!="}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise LarsSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            if kind == "ident" and m.group() in _KEYWORDS:
                kind = "kw"
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, message: str, tok: _Tok | None = None):
        tok = tok or self.tok
        found = tok.text or "end of input"
        raise LarsSyntaxError(f"{message} (found {found!r})", tok.line, tok.col)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("op", "kw", "ident"):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        tok = self.tok
        if not self.accept(text):
            self.error(f"expected {text!r}")
        return tok

    # program := (directive | rule)*
    def program(self):
        rules, extensional = [], set()
        while self.tok.kind != "eof":
            if self.tok.kind == "directive":
                extensional |= self.directive()
            else:
                rules.append((self.tok, self.rule()))
        return rules, extensional

    def directive(self) -> set:
        tok = self.tok
        if tok.text != "#extensional":
            self.error("unknown directive", tok)
        self.i += 1
        names = {self.ident()}
        while self.accept(","):
            names.add(self.ident())
        self.expect(".")
        return names

    def ident(self) -> str:
        tok = self.tok
        if tok.kind != "ident":
            self.error("expected a predicate name")
        self.i += 1
        return tok.text

    def rule(self) -> Rule:
        head = self.head()
        body = []
        if self.accept(":-"):
            body.append(self.literal())
            while self.accept(","):
                body.append(self.literal())
        self.expect(".")
        flat = []
        for lit in body:
            flat.extend(lit if isinstance(lit, list) else [lit])
        return Rule(head, tuple(flat))

    def head(self) -> Formula:
        tok = self.tok
        if tok.text == "at" and tok.kind == "kw":
            self.i += 1
            self.expect("(")
            t = self.term()
            self.expect(")")
            return At(t, AtomNode(self.atom()))
        if tok.kind == "kw" or tok.text in ("~", "("):
            self.error("rule heads must be an atom or 'at(T) atom'", tok)
        return AtomNode(self.atom())

    def literal(self):
        if self.accept("not"):
            return Literal(self.formula(), naf=True)
        if self.is_comparison_start():
            return self.comparison()
        return Literal(self.formula())

    def is_comparison_start(self) -> bool:
        tok, nxt = self.tok, self.peek()
        if tok.kind in ("int", "var"):
            return True
        if tok.text == "-" and nxt.kind == "int":
            return True
        return tok.kind == "ident" and nxt.kind == "op" and nxt.text in _CMP_OPS

    def comparison(self) -> list:
        # chained: a <= b < c  ==>  a <= b, b < c
        left = self.term()
        out = []
        while self.tok.kind == "op" and self.tok.text in _CMP_OPS:
            op = self.tok.text
            self.i += 1
            right = self.term()
            out.append(Literal(Comparison(left, op, right)))
            left = right
        if not out:
            self.error("expected a comparison operator")
        return out

    def formula(self) -> Formula:
        left = self.disjunction()
        if self.accept("->"):
            return Implies(left, self.formula())
        return left

    def disjunction(self) -> Formula:
        f = self.conjunction()
        while self.accept("or"):
            f = Or(f, self.conjunction())
        return f

    def conjunction(self) -> Formula:
        f = self.unary()
        while self.accept("and"):
            f = And(f, self.unary())
        return f

    def unary(self) -> Formula:
        tok = self.tok
        if self.accept("~"):
            return Not(self.unary())
        if tok.kind == "kw":
            if self.accept("always"):
                return Box(self.unary())
            if self.accept("sometime"):
                return Diamond(self.unary())
            if self.accept("in"):
                self.expect("[")
                k = self.tok
                if k.kind != "int":
                    self.error("expected a window size")
                self.i += 1
                if self.tok.kind == "ident" and self.tok.text == "s":
                    self.i += 1
                self.expect("]")
                return Window(int(k.text), self.unary())
            if self.accept("at"):
                self.expect("(")
                t = self.term()
                self.expect(")")
                return At(t, self.unary())
            self.error("unexpected keyword")
        if self.accept("("):
            f = self.formula()
            self.expect(")")
            return f
        return AtomNode(self.atom())

    def atom(self) -> Atom:
        name = self.ident()
        args = ()
        if self.accept("("):
            args = [self.term()]
            while self.accept(","):
                args.append(self.term())
            self.expect(")")
            args = tuple(args)
        return Atom(name, args)

    def term(self):
        tok = self.tok
        if tok.text == "-" and self.peek().kind == "int":
            self.i += 2
            return -int(self.peek(-1).text)
        if tok.kind == "int":
            self.i += 1
            return int(tok.text)
        if tok.kind == "var":
            self.i += 1
            return Var(tok.text)
        if tok.kind == "ident":
            self.i += 1
            return tok.text
        self.error("expected a term")


def parse_program(text: str, extensional: Iterable[str] = ()) -> Program:
    """Parse rule text into a validated :class:`Program`.

    Syntax, one rule per line (``%`` starts a comment)::

        at(T) high :- in[30 s] at(T) alpha(V), V >= 18.
        use(random) :- not done.
        #extensional alpha, rtm50.
    """
    parsed, declared = _Parser(text).program()
    declared |= set(extensional)
    for tok, rule in parsed:
        pred = rule.head_atom.predicate
        if pred in declared:
            raise LarsSyntaxError(f"extensional predicate {pred!r} used in a rule head", tok.line, tok.col)
        try:
            check_safety(rule)
        except SafetyError as exc:
            raise SafetyError(f"line {tok.line}: {exc}", exc.variable) from None
    rules = tuple(r for _, r in parsed)
    heads = {r.head_atom.predicate for r in rules}
    body_preds = {a.predicate for r in rules for a in _rule_body_atoms(r)}
    return Program(rules, frozenset(declared | (body_preds - heads)))


def _rule_body_atoms(rule: Rule) -> Iterator[Atom]:
    for lit in rule.body:
        if not lit.is_comparison:
            yield from _formula_atoms(lit.formula)


def _formula_atoms(f) -> Iterator[Atom]:
    if isinstance(f, AtomNode):
        yield f.atom
    for child in _children(f):
        yield from _formula_atoms(child)


def _formula_vars(f) -> Iterator[Var]:
    if isinstance(f, AtomNode):
        yield from (a for a in f.atom.args if isinstance(a, Var))
    elif isinstance(f, At) and isinstance(f.time, Var):
        yield f.time
    elif isinstance(f, Comparison):
        yield from (x for x in (f.left, f.right) if isinstance(x, Var))
    for child in _children(f):
        yield from _formula_vars(child)


def rule_vars(rule: Rule) -> set:
    out = set(_formula_vars(rule.head))
    for lit in rule.body:
        out.update(_formula_vars(lit.formula))
    return out


def check_safety(rule: Rule) -> None:
    bound = set()
    for lit in rule.body:
        if not lit.naf and not lit.is_comparison:
            bound.update(_formula_vars(lit.formula))
    for v in sorted(rule_vars(rule) - bound, key=lambda v: v.name):
        raise SafetyError(
            f"unsafe variable {v.name} in rule '{rule}': it must occur in a positive body literal",
            v.name,
        )


# -- grounding -------------------------------------------------------------------


class _AtomIndex:
    """Possibly-true atoms by (predicate, arity) and time; background at every time."""

    def __init__(self, pairs: Iterable[tuple[int, Atom]], background: Iterable[Atom]):
        self.by_key: dict = {}
        self.always: dict = {}
        self.values: dict = {}
        for t, a in pairs:
            self._add(self.by_key.setdefault((a.predicate, len(a.args)), {}).setdefault(t, set()), a)
        for a in background:
            self._add(self.always.setdefault((a.predicate, len(a.args)), set()), a)

    def _add(self, bucket: set, a: Atom):
        bucket.add(a.args)
        for pos, value in enumerate(a.args):
            self.values.setdefault((a.predicate, len(a.args), pos), set()).add(value)

    def args_at(self, key, t: int):
        yield from self.by_key.get(key, {}).get(t, ())
        yield from self.always.get(key, ())


def _resolve(term, theta: dict):
    return theta.get(term, term) if isinstance(term, Var) else term


def _unify(template: tuple, args: tuple, theta: dict) -> dict | None:
    out = None
    for tmpl, value in zip(template, args):
        if isinstance(tmpl, Var):
            bound = (out or theta).get(tmpl)
            if bound is None:
                out = dict(out or theta)
                out[tmpl] = value
            elif bound != value:
                return None
        elif tmpl != value:
            return None
    return theta if out is None else out


def _match(f, idx: _AtomIndex, lo: int, hi: int, now, theta: dict) -> Iterator[dict]:
    """Bindings under which positive formula ``f`` may hold.

    ``now`` is the evaluation time, or None when it ranges over [lo, hi].
    Yields a superset of the relevant bindings; non-binding positions
    (negation, implication) leave variables for domain completion.
    """
    if isinstance(f, AtomNode):
        a = f.atom
        key = (a.predicate, len(a.args))
        times = (now,) if now is not None else range(lo, hi + 1)
        seen = set()
        for u in times:
            for args in idx.args_at(key, u):
                th = _unify(a.args, args, theta)
                if th is not None:
                    sig = tuple(sorted(th.items(), key=lambda kv: kv[0].name))
                    if sig not in seen:
                        seen.add(sig)
                        yield th
    elif isinstance(f, And):
        for th in _match(f.left, idx, lo, hi, now, theta):
            yield from _match(f.right, idx, lo, hi, now, th)
    elif isinstance(f, Or):
        yield from _match(f.left, idx, lo, hi, now, theta)
        yield from _match(f.right, idx, lo, hi, now, theta)
    elif isinstance(f, (Diamond, Box)):
        yield from _match(f.sub, idx, lo, hi, None, theta)
    elif isinstance(f, At):
        tt = _resolve(f.time, theta)
        if isinstance(tt, Var):
            for u in range(lo, hi + 1):
                th = dict(theta)
                th[tt] = u
                yield from _match(f.sub, idx, lo, hi, u, th)
        elif isinstance(tt, int) and lo <= tt <= hi:
            yield from _match(f.sub, idx, lo, hi, tt, theta)
    elif isinstance(f, Window):
        if now is None:
            yield from _match(f.sub, idx, lo, hi, None, theta)
        else:
            yield from _match(f.sub, idx, max(lo, now - f.k), now, now, theta)
    else:  # Not, Implies: no binding information
        yield theta


def _domains(f, idx: _AtomIndex, lo: int, hi: int, now, out: dict) -> None:
    """Collect candidate values per variable (intersected across occurrences)."""

    def narrow(v, values):
        out[v] = out[v] & values if v in out else set(values)

    if isinstance(f, AtomNode):
        a = f.atom
        for pos, arg in enumerate(a.args):
            if isinstance(arg, Var):
                narrow(arg, idx.values.get((a.predicate, len(a.args), pos), set()))
        return
    if isinstance(f, At) and isinstance(f.time, Var):
        narrow(f.time, set(range(lo, hi + 1)))
    if isinstance(f, Window):
        if now is not None:
            lo, hi = max(lo, now - f.k), now
    elif isinstance(f, (Diamond, Box)):
        now = None
    for child in _children(f):
        _domains(child, idx, lo, hi, now, out)


def _substitute(f, theta: dict):
    if isinstance(f, AtomNode):
        if not any(isinstance(a, Var) for a in f.atom.args):
            return f
        return AtomNode(Atom(f.atom.predicate, tuple(_resolve(a, theta) for a in f.atom.args)))
    if isinstance(f, Comparison):
        return Comparison(_resolve(f.left, theta), f.op, _resolve(f.right, theta))
    if isinstance(f, (Not, Diamond, Box)):
        return type(f)(_substitute(f.sub, theta))
    if isinstance(f, (And, Or, Implies)):
        return type(f)(_substitute(f.left, theta), _substitute(f.right, theta))
    if isinstance(f, At):
        return At(_resolve(f.time, theta), _substitute(f.sub, theta))
    if isinstance(f, Window):
        return Window(f.k, _substitute(f.sub, theta))
    raise TypeError(f"not a formula: {f!r}")


def _instantiate(rule: Rule, idx: _AtomIndex, tl: Timeline, t: int) -> Iterator[Rule]:
    variables = rule_vars(rule)
    if not variables:
        thetas = [{}]
    else:
        thetas = [{}]
        for lit in rule.body:
            if lit.naf or lit.is_comparison:
                continue
            thetas = [th2 for th in thetas for th2 in _match(lit.formula, idx, tl.start, tl.end, t, th)]
            if not thetas:
                return
        doms: dict = {}
        for lit in rule.body:
            if not lit.is_comparison:
                _domains(lit.formula, idx, tl.start, tl.end, t, doms)
        completed = []
        for th in thetas:
            free = sorted((v for v in variables if v not in th), key=lambda v: v.name)
            pools = [sorted(doms.get(v, ()), key=_term_key) for v in free]
            for combo in itertools.product(*pools):
                full = dict(th)
                full.update(zip(free, combo))
                completed.append(full)
        thetas = completed
    for th in thetas:
        body = []
        ok = True
        for lit in rule.body:
            g = _substitute(lit.formula, th) if th else lit.formula
            if isinstance(g, Comparison):
                if not g.evaluate():
                    ok = False
                    break
                continue
            body.append(Literal(g, lit.naf))
        if not ok:
            continue
        head = _substitute(rule.head, th) if th else rule.head
        if isinstance(head, At) and head.time not in tl:
            raise LarsError(f"head time {head.time} of rule '{rule}' lies outside the timeline {tl}")
        yield Rule(head, tuple(body))


def head_pair(rule: Rule, t: int) -> tuple[int, Atom]:
    if isinstance(rule.head, At):
        return rule.head.time, rule.head.sub.atom
    return t, rule.head.atom


def ground(p: Program, d: Stream, t: int, background: Iterable[Atom] = frozenset()) -> GroundProgram:
    """Instantiate ``p`` against data stream ``d`` at time ``t``.

    Time variables range over the innermost enclosing window; value
    variables over constants observed for the matched predicate. Rules whose
    comparisons fail are dropped.
    """
    if t not in d.timeline:
        raise PreconditionError(f"t={t} not in timeline {d.timeline}")
    for r in p.rules:
        check_safety(r)
    background = frozenset(background)
    pairs = set(d.atoms())
    while True:
        idx = _AtomIndex(pairs, background)
        rules = {}
        for r in p.rules:
            for g in _instantiate(r, idx, d.timeline, t):
                rules.setdefault(g, None)
        grown = pairs | {head_pair(g, t) for g in rules}
        if grown == pairs:
            return GroundProgram(tuple(rules))
        pairs = grown


# -- reduct and models -----------------------------------------------------------


def body_holds(rule: Rule, m: Structure, t: int) -> bool:
    s = m.interpretation
    for lit in rule.body:
        if entails(m, s, t, lit.formula) == lit.naf:
            return False
    return True


def reduct(g: GroundProgram, m: Structure, t: int) -> GroundProgram:
    return GroundProgram(tuple(r for r in g if body_holds(r, m, t)))


def check_model(g: GroundProgram, m: Structure, t: int) -> bool:
    s = m.interpretation
    return all(entails(m, s, t, r.head) for r in g if body_holds(r, m, t))


# -- brute-force answer streams ------------------------------------------------

DEFAULT_BUDGET = 2**20

_T, _U, _F = 1.0, 0.5, 0.0


class _Partial:
    """Three-valued view of an interpretation under construction."""

    def __init__(self, d: Stream, background: frozenset, candidates: Iterable):
        self.d = d
        self.bg = background
        self.candidates = set(candidates)
        self.assigned: dict = {}

    def value(self, t: int, a: Atom) -> float:
        if a in self.bg or a in self.d.at(t):
            return _T
        v = self.assigned.get((t, a))
        if v is not None:
            return _T if v else _F
        return _U if (t, a) in self.candidates else _F

    def eval(self, f, lo: int, hi: int, t: int) -> float:
        if isinstance(f, AtomNode):
            return self.value(t, f.atom)
        if isinstance(f, Not):
            return 1.0 - self.eval(f.sub, lo, hi, t)
        if isinstance(f, And):
            return min(self.eval(f.left, lo, hi, t), self.eval(f.right, lo, hi, t))
        if isinstance(f, Or):
            return max(self.eval(f.left, lo, hi, t), self.eval(f.right, lo, hi, t))
        if isinstance(f, Implies):
            return max(1.0 - self.eval(f.left, lo, hi, t), self.eval(f.right, lo, hi, t))
        if isinstance(f, Diamond):
            return max(self.eval(f.sub, lo, hi, u) for u in range(lo, hi + 1))
        if isinstance(f, Box):
            return min(self.eval(f.sub, lo, hi, u) for u in range(lo, hi + 1))
        if isinstance(f, At):
            return self.eval(f.sub, lo, hi, f.time) if lo <= f.time <= hi else _F
        if isinstance(f, Window):
            return self.eval(f.sub, max(lo, t - f.k), t, t)
        raise TypeError(f"not a formula: {f!r}")

    def violated(self, rules, t: int) -> bool:
        """Some rule has a certainly-true body and a certainly-false head."""
        lo, hi = self.d.timeline.start, self.d.timeline.end
        for r in rules:
            if self.eval(r.head, lo, hi, t) != _F:
                continue
            for lit in r.body:
                v = self.eval(lit.formula, lo, hi, t)
                if v != (_F if lit.naf else _T):
                    break
            else:
                return True
        return False


class _Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def tick(self):
        self.used += 1
        if self.used > self.limit:
            raise CapacityError(
                f"brute-force search exceeded its budget of {self.limit} candidates; "
                "use the stratified evaluator"
            )


def _interp(d: Stream, chosen: Iterable) -> Stream:
    return d.add(chosen)


def _models(rules, part: _Partial, order: list, t: int, budget: _Budget, i: int = 0) -> Iterator[dict]:
    budget.tick()
    if part.violated(rules, t):
        return
    if i == len(order):
        yield dict(part.assigned)
        return
    pair = order[i]
    for value in (False, True):
        part.assigned[pair] = value
        yield from _models(rules, part, order, t, budget, i + 1)
    del part.assigned[pair]


def _has_smaller_model(red: GroundProgram, d: Stream, bg: frozenset, chosen: list, t: int, budget: _Budget) -> bool:
    part = _Partial(d, bg, chosen)
    for assignment in _models(red.rules, part, chosen, t, budget):
        if all(assignment.values()):
            continue
        sub = _interp(d, [p for p, v in assignment.items() if v])
        if check_model(red, Structure(sub, bg), t):
            return True
    return False


def candidate_pairs(g: GroundProgram, d: Stream, t: int) -> list:
    pairs = {head_pair(r, t) for r in g}
    return sorted((p for p in pairs if p[0] in d.timeline and p[1] not in d.at(p[0])),
                  key=lambda p: (p[0], p[1].sort_key()))


def answer_streams_bruteforce(
    p: Program,
    d: Stream,
    t: int,
    budget: int = DEFAULT_BUDGET,
    background: Iterable[Atom] = frozenset(),
    exhaustive: bool = False,
) -> set:
    """All answer streams of ``p`` for ``d`` at ``t``, by search over interpretations.

    Candidates are the data stream extended by any subset of the intensional
    head atoms of the grounding. With ``exhaustive=True`` every subset is
    enumerated (``2**n`` must not exceed ``budget``); otherwise a
    backtracking search skips subtrees whose partial assignment already
    violates a rule, and ``budget`` bounds the number of visited nodes.
    """
    bg = frozenset(background)
    g = ground(p, d, t, bg)
    pairs = candidate_pairs(g, d, t)
    found = set()
    if exhaustive:
        if 2 ** len(pairs) > budget:
            raise CapacityError(
                f"{2 ** len(pairs)} candidate interpretations exceed the budget of {budget}; "
                "use the stratified evaluator"
            )
        for mask in range(2 ** len(pairs)):
            chosen = [pairs[i] for i in range(len(pairs)) if mask >> i & 1]
            m = Structure(_interp(d, chosen), bg)
            red = reduct(g, m, t)
            if not check_model(red, m, t):
                continue
            minimal = True
            sub = (mask - 1) & mask
            while True:
                if sub != mask:
                    smaller = [pairs[i] for i in range(len(pairs)) if sub >> i & 1]
                    if check_model(red, Structure(_interp(d, smaller), bg), t):
                        minimal = False
                        break
                if sub == 0:
                    break
                sub = (sub - 1) & mask
            if minimal:
                found.add(m.interpretation)
    else:
        counter = _Budget(budget)
        part = _Partial(d, bg, pairs)
        for assignment in _models(g.rules, part, pairs, t, counter):
            chosen = [pr for pr, v in assignment.items() if v]
            m = Structure(_interp(d, chosen), bg)
            red = reduct(g, m, t)
            if not check_model(red, m, t):
                continue
            if not _has_smaller_model(red, d, bg, chosen, t, counter):
                found.add(m.interpretation)
    for s in found:
        _check_extensional(p, d, s)
    return found


def _check_extensional(p: Program, d: Stream, s: Stream) -> None:
    for t, a in s.atoms():
        if a.predicate not in p.intensional and a not in d.at(t):
            raise AssertionError(f"answer stream adds extensional atom {a} at {t}")
    for t, a in d.atoms():
        if a not in s.at(t):
            raise AssertionError(f"answer stream drops data atom {a} at {t}")


# -- stratified evaluation -----------------------------------------------------


def _polar_atoms(f, positive: bool) -> Iterator[tuple[Atom, bool]]:
    if isinstance(f, AtomNode):
        yield f.atom, positive
    elif isinstance(f, Not):
        yield from _polar_atoms(f.sub, False)
    elif isinstance(f, Implies):
        yield from _polar_atoms(f.left, False)
        yield from _polar_atoms(f.right, positive)
    else:
        for child in _children(f):
            yield from _polar_atoms(child, positive)


def strata(g: GroundProgram) -> dict:
    """Assign a stratum to every ground atom (time-independent).

    Any atom under negation counts as a negative dependency, which may
    reject some programs with double negation; it never admits an
    unstratified one.
    """
    deps = []
    atoms = set()
    for r in g:
        h = r.head_atom
        atoms.add(h)
        for lit in r.body:
            for a, pos in _polar_atoms(lit.formula, not lit.naf):
                atoms.add(a)
                deps.append((h, a, 0 if pos else 1))
    level = dict.fromkeys(atoms, 0)
    limit = len(atoms)
    changed = True
    while changed:
        changed = False
        for h, a, step in deps:
            need = level[a] + step
            if need > level[h]:
                if need > limit:
                    raise StratificationError(f"program is not stratified: {h} depends on itself through negation")
                level[h] = need
                changed = True
    return level


def answer_stream_stratified(
    p: Program, d: Stream, t: int, background: Iterable[Atom] = frozenset()
) -> Stream:
    """Unique answer stream of a stratified program by layered fixpoints."""
    bg = frozenset(background)
    g = ground(p, d, t, bg)
    level = strata(g)
    layers: dict = {}
    for r in g:
        layers.setdefault(level[r.head_atom], []).append(r)
    ev = {u: set(a) for u, a in d.evaluation.items()}
    current = d
    for lv in sorted(layers):
        rules = layers[lv]
        changed = True
        while changed:
            changed = False
            m = Structure(current, bg)
            new = []
            for r in rules:
                u, a = head_pair(r, t)
                if a in ev.get(u, ()) or a in bg:
                    continue
                if body_holds(r, m, t):
                    new.append((u, a))
            if new:
                for u, a in new:
                    if u not in d.timeline:
                        raise LarsError(f"derived atom {a} at {u} outside timeline {d.timeline}")
                    ev.setdefault(u, set()).add(a)
                current = Stream(d.timeline, ev)
                changed = True
    _check_extensional(p, d, current)
    return current
