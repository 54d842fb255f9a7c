"""Term data model shared by the parser, the engine and the wire codec.

Terms are immutable and compare structurally.  Lists are kept flat: a
``PList`` holds its items in a tuple plus an optional tail, and
:func:`make_list` normalises nested tails so that two lists with the same
elements are always equal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1


class Var:
    """A logic variable.

    ``serial`` is 0 for variables written in source text; the engine gives
    renamed clause variables a fresh serial so that equally named variables
    from different clause instances stay distinct.
    """

    __slots__ = ("name", "serial", "_hash")

    def __init__(self, name: str, serial: int = 0) -> None:
        self.name = name
        self.serial = serial
        self._hash = hash((name, serial))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Var)
            and self.serial == other.serial
            and self.name == other.name
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        if self.serial:
            return f"Var({self.name!r}, {self.serial})"
        return f"Var({self.name!r})"

    @property
    def anonymous(self) -> bool:
        """True for ``_`` and ``_Name`` style don't-care variables."""
        return self.name.startswith("_")


@dataclass(frozen=True, slots=True)
class Const:
    name: str


@dataclass(frozen=True, slots=True)
class Int:
    value: int


@dataclass(frozen=True, slots=True)
class Str:
    value: str


@dataclass(frozen=True, slots=True)
class Compound:
    functor: str
    args: tuple

    @property
    def arity(self) -> int:
        return len(self.args)


@dataclass(frozen=True, slots=True)
class PList:
    items: tuple
    tail: "Term | None" = None


Term = Union[Var, Const, Int, Str, Compound, PList]

NIL = PList(())
ATOMIC = (Const, Int, Str)


def make_list(items, tail: Term | None = None) -> PList:
    """Build a normalised list, absorbing list-valued tails."""
    items = tuple(items)
    while isinstance(tail, PList):
        items = items + tail.items
        tail = tail.tail
    return PList(items, tail)


def indicator(term: Term) -> tuple[str, int]:
    """Predicate key ``(name, arity)`` of an atom."""
    if isinstance(term, Compound):
        return term.functor, len(term.args)
    if isinstance(term, Const):
        return term.name, 0
    raise TypeError(f"not an atom: {term!r}")


def is_atom(term: object) -> bool:
    return isinstance(term, (Const, Compound))


def iter_vars(term: Term) -> Iterator[Var]:
    """Variables of ``term`` in left-to-right order, with repeats."""
    stack = [term]
    while stack:
        t = stack.pop()
        if isinstance(t, Var):
            yield t
        elif isinstance(t, Compound):
            stack.extend(reversed(t.args))
        elif isinstance(t, PList):
            if t.tail is not None:
                stack.append(t.tail)
            stack.extend(reversed(t.items))


def term_vars(term: Term) -> list[Var]:
    """Distinct variables of ``term`` in order of first occurrence."""
    return list(dict.fromkeys(iter_vars(term)))


def is_ground(term: Term) -> bool:
    for _ in iter_vars(term):
        return False
    return True
