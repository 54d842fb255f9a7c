"""Textual rule language: tokenizer, parser and canonical serializer.

Grammar (Prolog-like)::

    program  := clause*
    clause   := term '.' | term ':-' literal (',' literal)* '.'
    literal  := ['not'] term
    term     := operator expression over primaries
    primary  := Var | name | name '(' term, ... ')' | integer | string
              | '[' ']' | '[' term, ... ['|' term] ']' | '(' term ')'

Operators, tightest first: prefix ``-``; ``*`` ``div`` ``mod``; ``+`` ``-``;
the non-associative comparisons ``= == < <= > >= is``; prefix ``not``.
Operator terms are plain compounds (``X < 3`` is ``<(X,3)``), and the
serializer always emits functor notation.

Both the parser and the serializer run on explicit stacks so that terms up
to :data:`MAX_DEPTH` deep never touch the interpreter recursion limit.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator

from .terms import (
    INT_MAX,
    INT_MIN,
    NIL,
    Compound,
    Const,
    Int,
    PList,
    Str,
    Term,
    Var,
    indicator,
    is_atom,
    make_list,
)

MAX_ARITY = 255
MAX_DEPTH = 10_000

BUILTINS = frozenset(
    {"=", "==", "<", "<=", ">", ">=", "is", "findall", "count", "not",
     "ask", "delegate", "and"}
)


class RuleSyntaxError(SyntaxError):
    """Parse failure with a 1-based ``line``/``column`` and what was expected."""

    def __init__(self, line: int, column: int, expected: str, found: str = "") -> None:
        msg = f"line {line}, column {column}: expected {expected}"
        if found:
            msg += f", found {found}"
        super().__init__(msg)
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found


@dataclass(frozen=True)
class Literal:
    atom: Term
    negated: bool = False

    def __str__(self) -> str:
        s = serialize_term(self.atom)
        return f"not {s}" if self.negated else s

    def as_goal(self) -> Term:
        """The engine goal for this literal (negation becomes ``not/1``)."""
        return Compound("not", (self.atom,)) if self.negated else self.atom


@dataclass(frozen=True)
class Rule:
    head: Term
    body: tuple[Literal, ...] = ()

    @property
    def key(self) -> tuple[str, int]:
        return indicator(self.head)

    def __str__(self) -> str:
        if not self.body:
            return serialize_term(self.head) + "."
        return f"{serialize_term(self.head)} :- {', '.join(map(str, self.body))}."


@dataclass
class RuleBase:
    """Clauses grouped by ``(name, arity)``, each group in definition order."""

    groups: dict[tuple[str, int], list[Rule]] = field(default_factory=dict)

    def add(self, rule: Rule) -> None:
        self.groups.setdefault(rule.key, []).append(rule)
        self.__dict__.pop("_index", None)

    def extend(self, rules) -> None:
        for r in rules:
            self.add(r)

    def clauses(self, name: str, arity: int) -> list[Rule]:
        return self.groups.get((name, arity), [])

    def predicates(self) -> list[tuple[str, int]]:
        return list(self.groups)

    def __iter__(self) -> Iterator[Rule]:
        for group in self.groups.values():
            yield from group

    def __len__(self) -> int:
        return sum(len(g) for g in self.groups.values())

    def copy(self) -> "RuleBase":
        return RuleBase({k: list(v) for k, v in self.groups.items()})


# --------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>%[^\n]*)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<name>[a-z][A-Za-z0-9_]*)
  | (?P<int>[0-9]+)
  | (?P<str>")
  | (?P<neck>:-)
  | (?P<op>==|<=|>=|=|<|>|\+|-|\*)
  | (?P<punct>[()\[\]|,])
  | (?P<end>\.)
    """,
    re.VERBOSE,
)

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n"}


@dataclass(slots=True)
class _Tok:
    kind: str  # var name int str neck op punct end eof
    text: str
    value: object
    pos: int
    end: int
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, line_start = 0, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise RuleSyntaxError(line, pos - line_start + 1, "a token", repr(text[pos]))
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "ws" or kind == "comment":
            chunk = m.group()
            nl = chunk.count("\n")
            if nl:
                line += nl
                line_start = m.start() + chunk.rfind("\n") + 1
            pos = m.end()
            continue
        if kind == "str":
            value, end = _scan_string(text, pos, line, line_start)
            toks.append(_Tok("str", text[pos:end], value, pos, end, line, col))
            pos = end
            continue
        tok_text = m.group()
        value: object = tok_text
        if kind == "int":
            value = int(tok_text)
        toks.append(_Tok(kind, tok_text, value, pos, m.end(), line, col))
        pos = m.end()
    toks.append(_Tok("eof", "", None, n, n, line, n - line_start + 1))
    return toks


def _scan_string(text: str, start: int, line: int, line_start: int) -> tuple[str, int]:
    out = []
    i = start + 1
    n = len(text)
    while True:
        if i >= n:
            raise RuleSyntaxError(line, start - line_start + 1, "closing '\"'", "end of input")
        c = text[i]
        if c == '"':
            return "".join(out), i + 1
        if c == "\n":
            raise RuleSyntaxError(line, start - line_start + 1, "closing '\"' before end of line")
        if c == "\\":
            esc = text[i + 1] if i + 1 < n else ""
            if esc not in _ESCAPES:
                raise RuleSyntaxError(line, i - line_start + 1, r"escape \" \\ or \n", repr("\\" + esc))
            out.append(_ESCAPES[esc])
            i += 2
            continue
        out.append(c)
        i += 1


# --------------------------------------------------------------------------
# parser

# name -> (priority, kind); smaller priority binds tighter
_INFIX = {
    "*": (400, "yfx"), "div": (400, "yfx"), "mod": (400, "yfx"),
    "+": (500, "yfx"), "-": (500, "yfx"),
    "=": (700, "xfx"), "==": (700, "xfx"), "<": (700, "xfx"), "<=": (700, "xfx"),
    ">": (700, "xfx"), ">=": (700, "xfx"), "is": (700, "xfx"),
}
_PREFIX = {"-": 200, "not": 900}


class _Frame:
    """One open bracket (or the top level) and its shunting-yard state."""

    __slots__ = ("kind", "tok", "functor", "items", "tail_mode", "vals", "ops")

    def __init__(self, kind: str, tok: _Tok | None, functor: str = "") -> None:
        self.kind = kind  # top | args | list | paren
        self.tok = tok
        self.functor = functor
        self.items: list[tuple[Term, int]] = []
        self.tail_mode = False
        self.vals: list[tuple[Term, int]] = []
        self.ops: list[tuple[str, int, str, _Tok]] = []


def _err(tok: _Tok, expected: str) -> RuleSyntaxError:
    found = "end of input" if tok.kind == "eof" else repr(tok.text)
    return RuleSyntaxError(tok.line, tok.col, expected, found)


def _build(functor: str, parts: list[tuple[Term, int]], tok: _Tok) -> tuple[Term, int]:
    depth = 1 + max(d for _, d in parts)
    if depth > MAX_DEPTH:
        raise RuleSyntaxError(tok.line, tok.col, f"term depth at most {MAX_DEPTH}")
    return Compound(functor, tuple(t for t, _ in parts)), depth


class _Parser:
    def __init__(self, text: str) -> None:
        self.toks = _tokenize(text)
        self.i = 0
        self.anon = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def at_eof(self) -> bool:
        return self.tok.kind == "eof"

    def expect(self, kind: str, what: str) -> _Tok:
        t = self.tok
        if t.kind != kind:
            raise _err(t, what)
        self.i += 1
        return t

    # -- expression machinery -------------------------------------------

    def _reduce_top(self, fr: _Frame) -> None:
        name, _prio, kind, tok = fr.ops.pop()
        if kind == "prefix":
            fr.vals.append(_build(name, [fr.vals.pop()], tok))
        else:
            right = fr.vals.pop()
            left = fr.vals.pop()
            fr.vals.append(_build(name, [left, right], tok))

    def _finish(self, fr: _Frame) -> tuple[Term, int]:
        while fr.ops:
            self._reduce_top(fr)
        assert len(fr.vals) == 1
        out = fr.vals.pop()
        return out

    def _push_infix(self, fr: _Frame, name: str, tok: _Tok) -> None:
        prio, kind = _INFIX[name]
        while fr.ops:
            top_prio = fr.ops[-1][1]
            if top_prio < prio or (top_prio == prio and kind == "yfx"):
                self._reduce_top(fr)
            elif top_prio == prio and kind == "xfx" and fr.ops[-1][2] == "xfx":
                raise RuleSyntaxError(tok.line, tok.col, "parentheses around non-associative operator", repr(name))
            else:
                break
        fr.ops.append((name, prio, kind, tok))

    def expression(self, stops: tuple[str, ...]) -> tuple[Term, _Tok]:
        """Parse one top-level term; stop (without consuming) at a token in ``stops``.

        ``stops`` holds token texts or kinds, e.g. ``(",", ".", ":-", "eof")``.
        """
        stack = [_Frame("top", None)]
        want_operand = True
        while True:
            fr = stack[-1]
            t = self.tok
            if want_operand:
                if t.kind == "eof":
                    if fr.kind != "top":
                        raise RuleSyntaxError(fr.tok.line, fr.tok.col, "closing bracket", "end of input")
                    raise _err(t, "a term")
                self.i += 1
                kind = t.kind
                nxt = self.tok
                if kind == "var":
                    if t.text == "_":
                        self.anon += 1
                        fr.vals.append((Var("_", -self.anon), 0))
                    else:
                        fr.vals.append((Var(t.text), 0))
                    want_operand = False
                elif kind == "int":
                    if t.value > INT_MAX:
                        raise RuleSyntaxError(t.line, t.col, "a signed 64-bit integer", t.text)
                    fr.vals.append((Int(t.value), 0))
                    want_operand = False
                elif kind == "str":
                    fr.vals.append((Str(t.value), 0))
                    want_operand = False
                elif kind == "name":
                    if nxt.text == "(":
                        self.i += 1
                        stack.append(_Frame("args", nxt, t.text))
                    elif t.text == "not" and (
                        nxt.kind in ("var", "name", "int", "str", "op") or nxt.text == "["
                    ):
                        fr.ops.append(("not", _PREFIX["not"], "prefix", t))
                    else:
                        fr.vals.append((Const(t.text), 0))
                        want_operand = False
                elif kind == "op":
                    if nxt.text == "(":
                        self.i += 1
                        stack.append(_Frame("args", nxt, t.text))
                    elif t.text == "-" and nxt.kind == "int" and nxt.pos == t.end:
                        self.i += 1
                        if -nxt.value < INT_MIN:
                            raise RuleSyntaxError(t.line, t.col, "a signed 64-bit integer", "-" + nxt.text)
                        fr.vals.append((Int(-nxt.value), 0))
                        want_operand = False
                    elif t.text == "-":
                        fr.ops.append(("-", _PREFIX["-"], "prefix", t))
                    else:
                        raise _err(t, "a term")
                elif t.text == "[":
                    if nxt.text == "]":
                        self.i += 1
                        fr.vals.append((NIL, 0))
                        want_operand = False
                    else:
                        stack.append(_Frame("list", t))
                elif t.text == "(":
                    stack.append(_Frame("paren", t))
                else:
                    self.i -= 1
                    raise _err(t, "a term")
                continue

            # an operand is complete; look for an operator or a closer
            name = t.text
            if (t.kind == "op" or t.kind == "name") and name in _INFIX:
                self.i += 1
                self._push_infix(fr, name, t)
                want_operand = True
                continue
            if fr.kind == "top":
                if name in stops or t.kind in stops:
                    return self._finish(fr)[0], t
                raise _err(t, " or ".join(repr(s) for s in stops if s != "eof") or "end of input")
            if t.kind in ("end", "neck", "eof"):
                opener = fr.tok
                raise RuleSyntaxError(
                    opener.line, opener.col,
                    f"closing {')' if fr.kind != 'list' else ']'} for this bracket",
                    "end of input" if t.kind == "eof" else repr(t.text),
                )
            self.i += 1
            if name == ",":
                if fr.kind == "paren" or (fr.kind == "list" and fr.tail_mode):
                    raise _err(t, "')'" if fr.kind == "paren" else "']'")
                fr.items.append(self._finish(fr))
                if fr.kind == "args" and len(fr.items) >= MAX_ARITY:
                    raise RuleSyntaxError(t.line, t.col, f"at most {MAX_ARITY} arguments")
                want_operand = True
                continue
            if name == "|" and fr.kind == "list" and not fr.tail_mode:
                fr.items.append(self._finish(fr))
                fr.tail_mode = True
                want_operand = True
                continue
            if name == ")" and fr.kind in ("args", "paren"):
                value = self._finish(fr)
                stack.pop()
                if fr.kind == "paren":
                    stack[-1].vals.append(value)
                else:
                    fr.items.append(value)
                    stack[-1].vals.append(_build(fr.functor, fr.items, fr.tok))
                continue
            if name == "]" and fr.kind == "list":
                value = self._finish(fr)
                stack.pop()
                if fr.tail_mode:
                    items, tail = fr.items, value
                else:
                    items, tail = fr.items + [value], None
                depth = 1 + max(d for _, d in items + ([tail] if tail else []))
                if depth > MAX_DEPTH:
                    raise RuleSyntaxError(t.line, t.col, f"term depth at most {MAX_DEPTH}")
                lst = make_list([x for x, _ in items], tail[0] if tail else None)
                stack[-1].vals.append((lst, depth))
                continue
            self.i -= 1
            closer = {"args": "',' or ')'", "paren": "')'", "list": "',' '|' or ']'"}[fr.kind]
            if fr.tail_mode:
                closer = "']'"
            raise _err(t, closer)

    # -- clauses ---------------------------------------------------------

    def literal(self, stops) -> tuple[Literal, _Tok]:
        start = self.tok
        term, stop = self.expression(stops)
        negated = False
        if isinstance(term, Compound) and term.functor == "not" and len(term.args) == 1:
            term, negated = term.args[0], True
        if not is_atom(term):
            raise _err(start, "a goal (atom or compound)")
        return Literal(term, negated), stop

    def clause(self) -> Rule:
        self.anon = 0
        start = self.tok
        if start.kind in ("var", "int", "str"):
            raise _err(start, "a clause head (atom or compound)")
        head, stop = self.expression((":-", "."))
        if not is_atom(head):
            raise _err(start, "a clause head (atom or compound)")
        if indicator(head)[0] in BUILTINS:
            raise RuleSyntaxError(start.line, start.col, "a user predicate", f"built-in {indicator(head)[0]!r} as rule head")
        body: list[Literal] = []
        if stop.kind == "neck":
            self.i += 1
            while True:
                lit, stop = self.literal((",", "."))
                body.append(lit)
                self.i += 1
                if stop.kind == "end":
                    break
        else:
            self.i += 1
        return Rule(head, tuple(body))


def parse_program(text: str) -> RuleBase:
    """Parse rules and facts into a :class:`RuleBase`."""
    p = _Parser(text)
    rb = RuleBase()
    while not p.at_eof():
        rb.add(p.clause())
    return rb


def parse_clauses(text: str) -> list[Rule]:
    p = _Parser(text)
    out = []
    while not p.at_eof():
        out.append(p.clause())
    return out


def parse_query(text: str) -> list[Literal]:
    """Parse ``g1, g2, ... .`` (the final period is optional)."""
    p = _Parser(text)
    if p.at_eof():
        raise _err(p.tok, "a query")
    lits = []
    while True:
        lit, stop = p.literal((",", ".", "eof"))
        lits.append(lit)
        if stop.kind == "eof":
            break
        p.i += 1
        if stop.kind == "end":
            p.expect("eof", "end of input after '.'")
            break
    return lits


def parse_term(text: str) -> Term:
    """Parse a single term, optionally followed by a period."""
    p = _Parser(text)
    term, stop = p.expression((".", "eof"))
    if stop.kind == "end":
        p.i += 1
    p.expect("eof", "end of input")
    return term


# --------------------------------------------------------------------------
# serializer


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def serialize_term(t: Term) -> str:
    """Canonical text: no whitespace, functor notation, escaped strings."""
    out: list[str] = []
    stack: list[object] = [t]
    while stack:
        x = stack.pop()
        if isinstance(x, str):
            out.append(x)
        elif isinstance(x, Var):
            out.append(x.name)
        elif isinstance(x, Const):
            out.append(x.name)
        elif isinstance(x, Int):
            out.append(str(x.value))
        elif isinstance(x, Str):
            out.append(_quote(x.value))
        elif isinstance(x, Compound):
            out.append(x.functor)
            out.append("(")
            stack.append(")")
            for k in range(len(x.args) - 1, -1, -1):
                stack.append(x.args[k])
                if k:
                    stack.append(",")
        elif isinstance(x, PList):
            out.append("[")
            stack.append("]")
            if x.tail is not None:
                stack.append(x.tail)
                stack.append("|")
            for k in range(len(x.items) - 1, -1, -1):
                stack.append(x.items[k])
                if k:
                    stack.append(",")
        else:
            raise TypeError(f"not a term: {x!r}")
    return "".join(out)


def format_program(rb: RuleBase) -> str:
    return "".join(str(r) + "\n" for r in rb)
