"""Message envelope and the newline-delimited wire codec.

A message travels as one line holding the canonical term
``msg(CID,SENDER,RECEIVER,PERFORMATIVE,CONTENT)`` followed by ``\\n``.
"""

from __future__ import annotations

import secrets
import time
from dataclasses import dataclass, field

from .lang import RuleSyntaxError, parse_term, serialize_term
from .terms import (
    Compound,
    Const,
    PList,
    Str,
    Term,
    is_atom,
    is_ground,
    make_list,
)

PROTOCOL = "ruleresponder-1"
MAX_MESSAGE_BYTES = 1 << 20
MAX_CID_BYTES = 128
PERFORMATIVES = ("register", "ack", "query", "answer", "end_of_answers", "error")
NONE = Const("none")


class MessageError(Exception):
    pass


class MessageTooLarge(MessageError):
    pass


class InvalidContentShape(MessageError):
    pass


class UnknownPerformative(MessageError):
    pass


class DecodeError(MessageError):
    def __init__(self, position: int, reason: str) -> None:
        super().__init__(f"at byte {position}: {reason}")
        self.position = position
        self.reason = reason


@dataclass(frozen=True)
class Message:
    cid: str
    sender: str
    receiver: str
    performative: str
    content: Term = NONE
    protocol: str = PROTOCOL

    def validate(self) -> None:
        check_message(self)

    # convenience constructors -------------------------------------------

    @classmethod
    def register(cls, cid: str, name: str, broker: str = "broker") -> "Message":
        return cls(cid, name, broker, "register", Compound("agent", (Const(name),)))

    @classmethod
    def error(cls, cid: str, sender: str, receiver: str, code: str, detail: str) -> "Message":
        return cls(cid, sender, receiver, "error", Compound("err", (Const(code), Str(detail))))

    @classmethod
    def answer(cls, cid: str, sender: str, receiver: str, bindings: dict) -> "Message":
        return cls(cid, sender, receiver, "answer", bindings_term(bindings))

    def reply(self, performative: str, content: Term = NONE) -> "Message":
        return Message(self.cid, self.receiver, self.sender, performative, content)

    @property
    def error_code(self) -> tuple[str, str]:
        """``(code, detail)`` of an error message."""
        code, detail = self.content.args
        return code.name, detail.value

    @property
    def bindings(self) -> dict:
        """Answer bindings as ``{name: term}`` in wire order."""
        return {b.args[0].value: b.args[1] for b in self.content.args[0].items}


def bindings_term(bindings: dict) -> Term:
    return Compound(
        "bindings",
        (make_list(Compound("bind", (Str(k), v)) for k, v in bindings.items()),),
    )


def goal_term(literals) -> Term:
    """Query content for a list of literals: one goal or ``and(...)``."""
    goals = [lit.as_goal() for lit in literals]
    return goals[0] if len(goals) == 1 else Compound("and", tuple(goals))


_NAME_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_")


def _valid_name(s: str) -> bool:
    return bool(s) and "a" <= s[0] <= "z" and set(s) <= _NAME_CHARS


def _check_content(perf: str, c: Term) -> None:
    ok = True
    if perf == "query":
        ok = is_atom(c)
    elif perf == "answer":
        ok = (
            isinstance(c, Compound)
            and c.functor == "bindings"
            and len(c.args) == 1
            and isinstance(c.args[0], PList)
            and c.args[0].tail is None
            and all(
                isinstance(b, Compound)
                and b.functor == "bind"
                and len(b.args) == 2
                and isinstance(b.args[0], Str)
                and is_ground(b.args[1])
                for b in c.args[0].items
            )
        )
    elif perf == "error":
        ok = (
            isinstance(c, Compound)
            and c.functor == "err"
            and len(c.args) == 2
            and isinstance(c.args[0], Const)
            and isinstance(c.args[1], Str)
        )
    elif perf == "register":
        ok = (
            isinstance(c, Compound)
            and c.functor == "agent"
            and len(c.args) == 1
            and isinstance(c.args[0], Const)
        )
    else:
        ok = c == NONE
    if not ok:
        raise InvalidContentShape(f"{perf}: bad content {serialize_term(c)}")


def check_message(m: Message) -> None:
    if m.performative not in PERFORMATIVES:
        raise UnknownPerformative(m.performative)
    cid_bytes = m.cid.encode("utf-8")
    if not cid_bytes or len(cid_bytes) > MAX_CID_BYTES or "\n" in m.cid:
        raise MessageError(f"invalid conversation id {m.cid!r}")
    for name in (m.sender, m.receiver):
        if not _valid_name(name):
            raise MessageError(f"invalid agent name {name!r}")
    if m.protocol != PROTOCOL:
        raise MessageError(f"unsupported protocol {m.protocol!r}")
    _check_content(m.performative, m.content)


def to_term(m: Message) -> Term:
    return Compound(
        "msg",
        (Str(m.cid), Const(m.sender), Const(m.receiver), Const(m.performative), m.content),
    )


def encode(m: Message) -> bytes:
    """Canonical, bit-exact wire bytes for ``m`` (newline included)."""
    check_message(m)
    data = (serialize_term(to_term(m)) + "\n").encode("utf-8")
    if len(data) > MAX_MESSAGE_BYTES:
        raise MessageTooLarge(f"{len(data)} bytes exceeds {MAX_MESSAGE_BYTES}")
    return data


def decode(data: bytes, validate: bool = True) -> Message:
    """Parse one newline-terminated wire line into a validated Message.

    With ``validate=False`` the performative content shape is not checked,
    which lets a receiver still route a malformed reply by its cid.
    """
    if len(data) > MAX_MESSAGE_BYTES:
        raise DecodeError(MAX_MESSAGE_BYTES, "message too large")
    if not data.endswith(b"\n"):
        raise DecodeError(len(data), "end-of-input")
    nl = data.find(b"\n")
    if nl != len(data) - 1:
        raise DecodeError(nl, "embedded newline")
    try:
        text = data[:-1].decode("utf-8")
    except UnicodeDecodeError as e:
        raise DecodeError(e.start, "invalid utf-8") from None
    try:
        t = parse_term(text)
    except RuleSyntaxError as e:
        raise DecodeError(len(text[: e.column - 1].encode("utf-8")), e.msg) from None
    if not (isinstance(t, Compound) and t.functor == "msg" and len(t.args) == 5):
        raise DecodeError(0, "expected msg/5")
    cid, sender, receiver, perf, content = t.args
    if not isinstance(cid, Str):
        raise DecodeError(4, "conversation id must be a string")
    for part in (sender, receiver, perf):
        if not isinstance(part, Const):
            raise DecodeError(0, "sender, receiver and performative must be names")
    if perf.name not in PERFORMATIVES:
        raise UnknownPerformative(perf.name)
    m = Message(cid.value, sender.name, receiver.name, perf.name, content)
    if validate:
        check_message(m)
    return m


def new_cid() -> str:
    """Fresh 128-bit random conversation id, hex encoded."""
    return secrets.token_hex(16)


@dataclass
class Conversation:
    cid: str
    initiator: str
    target: str
    deadline: float  # time.monotonic() seconds
    state: str = "open"
    opened: float = field(default_factory=time.monotonic)

    def close(self) -> None:
        self.state = "closed"

    @property
    def is_open(self) -> bool:
        return self.state == "open"
