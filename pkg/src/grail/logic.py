"""First-order rule language: terms, atoms, definite clauses and rule bases.

Rule files are line-oriented Prolog-style definite clauses::

    up_air(X) :- oxygen_low(B).   % comment

Variables start uppercase, constants lowercase.  Every clause head must be an
action-head predicate; its action is the prefix before the first underscore
(``up_dodge_left`` -> ``up``).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

ANY_SORT = "object"
TYPE_SORT = "type"

BODY_SOFT = "body-soft"
BODY_CRISP = "body-crisp"
ACTION_HEAD = "action-head"
KINDS = (BODY_SOFT, BODY_CRISP, ACTION_HEAD)

# Atari minimal action order; actions outside it sort alphabetically after.
ACTION_ORDER = ("noop", "fire", "up", "right", "left", "down")

DEFAULT_MAX_BODY = 8


class RuleError(ValueError):
    """Base class for rule-file errors."""


class RuleSyntaxError(RuleError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnknownPredicateError(RuleError):
    pass


class ArityError(RuleError):
    pass


class ActionInBodyError(RuleError):
    pass


@dataclass(frozen=True)
class PredicateSignature:
    name: str
    arity: int
    arg_sorts: tuple[str, ...]
    kind: str

    def __post_init__(self):
        if self.arity < 0 or len(self.arg_sorts) != self.arity:
            raise ValueError(f"bad arity for {self.name}: {self.arity} vs {self.arg_sorts}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown predicate kind {self.kind!r}")

    @property
    def key(self) -> tuple[str, int]:
        return (self.name, self.arity)

    def __str__(self):
        return f"{self.name}/{self.arity}"


def action_head(name: str, arity: int = 1, sort: str = "player") -> PredicateSignature:
    return PredicateSignature(name, arity, (sort,) * arity, ACTION_HEAD)


def action_of(head_name: str) -> str:
    return head_name.split("_", 1)[0]


@dataclass(frozen=True)
class Variable:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Constant:
    name: str
    sort: str = ANY_SORT

    def __str__(self):
        return self.name


Term = Variable | Constant


@dataclass(frozen=True)
class Atom:
    predicate: PredicateSignature
    args: tuple[Term, ...]

    def variables(self) -> tuple[Variable, ...]:
        return tuple(a for a in self.args if isinstance(a, Variable))

    def __str__(self):
        return f"{self.predicate.name}({','.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Clause:
    head: Atom
    body: tuple[Atom, ...]
    weight_slot: int
    source_span: tuple[int, int] | None = field(default=None, compare=False)

    @property
    def action(self) -> str:
        return action_of(self.head.predicate.name)

    def body_variables(self) -> tuple[Variable, ...]:
        seen: dict[Variable, None] = {}
        for atom in self.body:
            for v in atom.variables():
                seen.setdefault(v, None)
        return tuple(seen)

    def head_only_variables(self) -> tuple[Variable, ...]:
        body = set(self.body_variables())
        return tuple(v for v in self.head.variables() if v not in body)

    def __str__(self):
        return f"{self.head} :- {', '.join(str(a) for a in self.body)}."


def order_actions(names: Iterable[str]) -> tuple[str, ...]:
    names = set(names)
    known = [a for a in ACTION_ORDER if a in names]
    return tuple(known) + tuple(sorted(names - set(ACTION_ORDER)))


@dataclass(frozen=True)
class RuleBase:
    clauses: tuple[Clause, ...]
    signatures: frozenset[PredicateSignature]
    action_heads: tuple[str, ...]

    def __len__(self):
        return len(self.clauses)

    @property
    def actions(self) -> tuple[str, ...]:
        """Action vocabulary in canonical order (noop first)."""
        return order_actions(action_of(h) for h in self.action_heads)

    def signature(self, name: str) -> PredicateSignature:
        for sig in self.signatures:
            if sig.name == name:
                return sig
        raise KeyError(name)

    def structure(self) -> tuple:
        """Span-free structural key, used for round-trip comparisons."""
        return tuple((str(c), c.weight_slot) for c in self.clauses)


# --------------------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<comment>%[^\n]*)|(?P<nl>\n)|(?P<neck>:-)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[(),.])"
)


def _tokenize(text: str):
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            yield kind, m.group(), line, m.start() - line_start + 1
        pos = m.end()
    yield "eof", "", line, pos - line_start + 1


class _Parser:
    def __init__(self, text: str, sigs: Mapping[str, PredicateSignature], auto_heads: bool):
        self.tokens = list(_tokenize(text))
        self.i = 0
        self.sigs = dict(sigs)
        self.auto_heads = auto_heads
        self.heads: list[str] = []

    def peek(self):
        return self.tokens[self.i]

    def expect(self, kind: str, value: str | None = None):
        tok = self.tokens[self.i]
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value or kind
            got = tok[1] or "end of file"
            raise RuleSyntaxError(f"expected {want!r}, found {got!r}", tok[2], tok[3])
        self.i += 1
        return tok

    def parse(self) -> list[Clause]:
        clauses = []
        while self.peek()[0] != "eof":
            clauses.append(self.clause(len(clauses)))
        return clauses

    def clause(self, slot: int) -> Clause:
        start = self.peek()
        name, args = self.raw_atom()
        head = self.make_head(name, args, start)
        self.expect("neck")
        body = [self.body_atom()]
        while self.peek()[1] == ",":
            self.i += 1
            body.append(self.body_atom())
        self.expect("punct", ".")
        return Clause(head, tuple(body), slot, (start[2], start[3]))

    def raw_atom(self):
        tok = self.expect("ident")
        self.expect("punct", "(")
        args = [self.expect("ident")]
        while self.peek()[1] == ",":
            self.i += 1
            args.append(self.expect("ident"))
        self.expect("punct", ")")
        return tok, args

    def make_head(self, tok, args, start) -> Atom:
        name = tok[1]
        sig = self.sigs.get(name)
        if sig is None:
            if not self.auto_heads:
                raise UnknownPredicateError(f"line {tok[2]}: unknown head predicate {name}/{len(args)}")
            sig = action_head(name, len(args))
            self.sigs[name] = sig
        if sig.kind != ACTION_HEAD:
            raise RuleError(f"line {tok[2]}: head {name} is not an action-head predicate")
        if name not in self.heads:
            self.heads.append(name)
        return self.check(sig, tok, args)

    def body_atom(self) -> Atom:
        tok, args = self.raw_atom()
        sig = self.sigs.get(tok[1])
        if sig is None:
            raise UnknownPredicateError(f"line {tok[2]}, column {tok[3]}: unknown predicate {tok[1]}/{len(args)}")
        if sig.kind == ACTION_HEAD:
            raise ActionInBodyError(f"line {tok[2]}: action-head predicate {tok[1]} used in a body")
        return self.check(sig, tok, args)

    @staticmethod
    def check(sig: PredicateSignature, tok, args) -> Atom:
        if len(args) != sig.arity:
            raise ArityError(f"line {tok[2]}: {sig.name} expects {sig.arity} arguments, got {len(args)}")
        terms = []
        for (_, text, _, _), sort in zip(args, sig.arg_sorts):
            terms.append(Variable(text) if text[0].isupper() else Constant(text, sort))
        return Atom(sig, tuple(terms))


def parse_rulebase(
    text: str,
    signatures: Iterable[PredicateSignature],
    auto_heads: bool = True,
) -> RuleBase:
    """Parse a rule file.  Unknown head predicates become action heads when
    ``auto_heads`` is set; unknown body predicates are always an error."""
    sigs = {}
    for sig in signatures:
        if sig.name in sigs and sigs[sig.name] != sig:
            raise RuleError(f"conflicting signatures for {sig.name}")
        sigs[sig.name] = sig
    parser = _Parser(text, sigs, auto_heads)
    clauses = parser.parse()
    return RuleBase(tuple(clauses), frozenset(parser.sigs.values()), tuple(parser.heads))


def pretty_print(rb: RuleBase) -> str:
    lines = [str(c) for c in rb.clauses]
    return "".join(line + "\n" for line in lines)


def select_clauses(rb: RuleBase, keep) -> RuleBase:
    """Sub-base of the clauses for which ``keep(clause)`` holds, with weight
    slots renumbered densely in file order."""
    kept = [c for c in rb.clauses if keep(c)]
    clauses = tuple(Clause(c.head, c.body, i, c.source_span) for i, c in enumerate(kept))
    heads = tuple(h for h in rb.action_heads if any(c.head.predicate.name == h for c in clauses))
    return RuleBase(clauses, rb.signatures, heads)


# --------------------------------------------------------------------------- validation

@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    clause: int | None
    message: str

    def __str__(self):
        where = f"clause {self.clause}" if self.clause is not None else "rule base"
        return f"{self.severity}: {where}: {self.message}"


def _sorts_compatible(a: str, b: str) -> bool:
    return a == b or ANY_SORT in (a, b)


def validate_rulebase(rb: RuleBase, max_body: int = DEFAULT_MAX_BODY) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    slots = sorted(c.weight_slot for c in rb.clauses)
    if slots != list(range(len(rb.clauses))):
        out.append(Diagnostic("error", None, f"weight slots {slots} are not 0..{len(rb.clauses) - 1}"))
    seen: dict[tuple, int] = {}
    for i, c in enumerate(rb.clauses):
        if c.head.predicate.kind != ACTION_HEAD:
            out.append(Diagnostic("error", i, f"head {c.head.predicate} is not an action head"))
        if not c.body:
            out.append(Diagnostic("error", i, "empty body"))
        if len(c.body) > max_body:
            out.append(Diagnostic("error", i, f"body has {len(c.body)} atoms (max {max_body})"))
        var_sort: dict[Variable, str] = {}
        for atom in (c.head, *c.body):
            if atom is not c.head and atom.predicate.kind == ACTION_HEAD:
                out.append(Diagnostic("error", i, f"action head {atom.predicate} in body"))
            if len(atom.args) != atom.predicate.arity:
                out.append(Diagnostic("error", i, f"arity mismatch in {atom}"))
            if atom is c.head:
                continue
            for term, sort in zip(atom.args, atom.predicate.arg_sorts):
                if isinstance(term, Variable):
                    prev = var_sort.get(term)
                    if prev is not None and not _sorts_compatible(prev, sort):
                        out.append(Diagnostic("error", i, f"variable {term} used as {prev} and {sort}"))
                    elif prev is None or prev == ANY_SORT:
                        var_sort[term] = sort
        for v in c.head_only_variables():
            out.append(Diagnostic("warning", i, f"head variable {v} does not occur in the body; bound to the player"))
        key = (str(c.head), tuple(sorted(str(a) for a in c.body)))
        if key in seen:
            out.append(Diagnostic("warning", i, f"duplicate of clause {seen[key]}"))
        else:
            seen[key] = i
    return out


def errors(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diags if d.severity == "error"]
