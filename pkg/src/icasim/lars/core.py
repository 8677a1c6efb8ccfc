"""Streams, sliding time-based windows, formulas and entailment.

Time points are whole seconds. Evaluations are stored sparsely: a time point
without a stored atom set evaluates to the empty set.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Union

Term = Union[int, str]


class LarsError(Exception):
    """Base class for errors raised by the LARS engine."""


class PreconditionError(LarsError):
    """An operation was called outside its domain (e.g. t not in timeline)."""


def _term_key(term) -> tuple:
    # ints sort before symbols; mixed argument lists stay totally ordered
    return (0, term, "") if isinstance(term, int) else (1, 0, str(term))


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: tuple = ()

    def __str__(self) -> str:
        if not self.args:
            return self.predicate
        return f"{self.predicate}({','.join(str(a) for a in self.args)})"

    def sort_key(self) -> tuple:
        return (self.predicate, len(self.args), tuple(_term_key(a) for a in self.args))

    def __lt__(self, other: "Atom") -> bool:
        return self.sort_key() < other.sort_key()


def atom(predicate: str, *args: Term) -> Atom:
    return Atom(predicate, tuple(args))


@dataclass(frozen=True, order=True)
class Timeline:
    start: int
    end: int

    def __post_init__(self):
        if self.start < 0:
            raise ValueError(f"timeline start must be >= 0, got {self.start}")
        if self.start > self.end:
            raise ValueError(f"empty timeline [{self.start},{self.end}]")

    def __contains__(self, t) -> bool:
        return isinstance(t, int) and self.start <= t <= self.end

    def __iter__(self) -> Iterator[int]:
        return iter(range(self.start, self.end + 1))

    def __len__(self) -> int:
        return self.end - self.start + 1

    def issubset(self, other: "Timeline") -> bool:
        return other.start <= self.start and self.end <= other.end

    def __str__(self) -> str:
        return f"[{self.start},{self.end}]"


Evaluation = Mapping[int, frozenset]


def _normalize(evaluation: Mapping[int, Iterable[Atom]]) -> dict[int, frozenset]:
    out = {}
    for t, atoms in evaluation.items():
        atoms = frozenset(atoms)
        if atoms:
            out[int(t)] = atoms
    return out


def restrict(evaluation: Mapping[int, Iterable[Atom]], sub: Timeline) -> dict[int, frozenset]:
    """Return the evaluation restricted to ``sub`` (empty everywhere else)."""
    return {t: frozenset(a) for t, a in evaluation.items() if t in sub and a}


@dataclass(frozen=True, eq=False)
class Stream:
    """A timeline together with a sparse evaluation function."""

    timeline: Timeline
    evaluation: Mapping[int, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        ev = _normalize(self.evaluation)
        for t in ev:
            if t not in self.timeline:
                raise ValueError(f"time point {t} outside timeline {self.timeline}")
        object.__setattr__(self, "evaluation", ev)

    def at(self, t: int) -> frozenset:
        return self.evaluation.get(t, frozenset())

    def atoms(self) -> Iterator[tuple[int, Atom]]:
        for t in sorted(self.evaluation):
            for a in sorted(self.evaluation[t]):
                yield t, a

    def add(self, pairs: Iterable[tuple[int, Atom]]) -> "Stream":
        ev = {t: set(a) for t, a in self.evaluation.items()}
        for t, a in pairs:
            ev.setdefault(t, set()).add(a)
        return Stream(self.timeline, ev)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Stream):
            return NotImplemented
        return self.timeline == other.timeline and self.evaluation == other.evaluation

    def __hash__(self) -> int:
        return hash((self.timeline, frozenset(self.evaluation.items())))

    def __repr__(self) -> str:
        body = ", ".join(f"{t}: {{{', '.join(str(a) for a in sorted(s))}}}"
                         for t, s in sorted(self.evaluation.items()))
        return f"Stream({self.timeline}, {{{body}}})"


def is_substream(a: Stream, b: Stream) -> bool:
    if not a.timeline.issubset(b.timeline):
        return False
    return all(atoms <= b.at(t) for t, atoms in a.evaluation.items())


def window_time(s: Stream, t: int, k: int) -> Stream:
    """Sliding time-based window of size ``k`` ending at ``t``."""
    if t not in s.timeline:
        raise PreconditionError(f"t={t} not in timeline {s.timeline}")
    if k < 0:
        raise ValueError(f"window size must be >= 0, got {k}")
    sub = Timeline(max(s.timeline.start, t - k), t)
    return Stream(sub, restrict(s.evaluation, sub))


# -- formulas ---------------------------------------------------------------


class Formula:
    __slots__ = ()


@dataclass(frozen=True)
class AtomNode(Formula):
    atom: Atom

    def __str__(self):
        return str(self.atom)


@dataclass(frozen=True)
class Not(Formula):
    sub: Formula

    def __str__(self):
        return f"~{_paren(self.sub)}"


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"{_paren(self.left)} and {_paren(self.right)}"


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"{_paren(self.left)} or {_paren(self.right)}"


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"{_paren(self.left)} -> {_paren(self.right)}"


@dataclass(frozen=True)
class Diamond(Formula):
    sub: Formula

    def __str__(self):
        return f"sometime {_paren(self.sub)}"


@dataclass(frozen=True)
class Box(Formula):
    sub: Formula

    def __str__(self):
        return f"always {_paren(self.sub)}"


@dataclass(frozen=True)
class At(Formula):
    time: object  # int once ground; a solver Var in schematic rules
    sub: Formula

    def __str__(self):
        return f"at({self.time}) {_paren(self.sub)}"


@dataclass(frozen=True)
class Window(Formula):
    k: int
    sub: Formula

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 0:
            raise ValueError(f"window size must be a non-negative integer, got {self.k!r}")

    def __str__(self):
        return f"in[{self.k} s] {_paren(self.sub)}"


def _paren(f: Formula) -> str:
    if isinstance(f, (And, Or, Implies)):
        return f"({f})"
    return str(f)


def conj(*fs: Formula) -> Formula:
    out = fs[0]
    for f in fs[1:]:
        out = And(out, f)
    return out


def disj(*fs: Formula) -> Formula:
    out = fs[0]
    for f in fs[1:]:
        out = Or(out, f)
    return out


@dataclass(frozen=True)
class Structure:
    interpretation: Stream
    background: frozenset = frozenset()


def entails(m: Structure, s: Stream, t: int, f: Formula) -> bool:
    """Decide ``m, s, t ||- f``.

    ``s`` is the currently considered window (initially the whole
    interpretation stream). ``at(t') f`` with ``t'`` outside the current
    window is false.
    """
    if t not in s.timeline:
        raise PreconditionError(f"t={t} not in timeline {s.timeline}")
    return _holds(m.background, s, t, f)


def _holds(bg: frozenset, s: Stream, t: int, f: Formula) -> bool:
    if isinstance(f, AtomNode):
        return f.atom in s.evaluation.get(t, ()) or f.atom in bg
    if isinstance(f, Not):
        return not _holds(bg, s, t, f.sub)
    if isinstance(f, And):
        return _holds(bg, s, t, f.left) and _holds(bg, s, t, f.right)
    if isinstance(f, Or):
        return _holds(bg, s, t, f.left) or _holds(bg, s, t, f.right)
    if isinstance(f, Implies):
        return not _holds(bg, s, t, f.left) or _holds(bg, s, t, f.right)
    if isinstance(f, Diamond):
        return any(_holds(bg, s, u, f.sub) for u in s.timeline)
    if isinstance(f, Box):
        return all(_holds(bg, s, u, f.sub) for u in s.timeline)
    if isinstance(f, At):
        if not isinstance(f.time, int):
            raise LarsError(f"cannot evaluate non-ground formula {f}")
        return f.time in s.timeline and _holds(bg, s, f.time, f.sub)
    if isinstance(f, Window):
        return _holds(bg, window_time(s, t, f.k), t, f.sub)
    raise TypeError(f"not a formula: {f!r}")


def models_at(m: Structure, t: int, f: Formula) -> bool:
    """``m, t |= f``: entailment on the full interpretation stream."""
    return entails(m, m.interpretation, t, f)


# -- textual stream format ----------------------------------------------------

_ATOM_RE = re.compile(r"^([a-z][A-Za-z0-9_]*)(?:\((.*)\))?$")
_SYMBOL_RE = re.compile(r"^[a-z][A-Za-z0-9_]*$")


def parse_term(text: str) -> Term:
    text = text.strip()
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    if _SYMBOL_RE.match(text):
        return text
    raise ValueError(f"bad term {text!r}")


def parse_atom(text: str) -> Atom:
    m = _ATOM_RE.match(text.strip())
    if not m:
        raise ValueError(f"bad atom {text!r}")
    pred, args = m.group(1), m.group(2)
    if args is None:
        return Atom(pred)
    if not args.strip():
        raise ValueError(f"bad atom {text!r}: empty argument list")
    return Atom(pred, tuple(parse_term(a) for a in args.split(",")))


def format_stream(s: Stream) -> str:
    lines = [f"timeline {s.timeline.start} {s.timeline.end}"]
    lines.extend(f"{t} {a}" for t, a in s.atoms())
    return "\n".join(lines) + "\n"


def parse_stream(text: str) -> Stream:
    timeline = None
    ev: dict[int, set] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        try:
            if head == "timeline":
                if timeline is not None:
                    raise ValueError("duplicate timeline header")
                start, end = rest.split()
                timeline = Timeline(int(start), int(end))
                continue
            if timeline is None:
                raise ValueError("missing 'timeline start end' header")
            t = int(head)
            if t not in timeline:
                raise ValueError(f"time point {t} outside timeline {timeline}")
            ev.setdefault(t, set()).add(parse_atom(rest))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if timeline is None:
        raise ValueError("missing 'timeline start end' header")
    return Stream(timeline, ev)
