"""Rule-based agent middleware.

A small logic-programming rule language and engine, a star-topology message
broker, and agents that answer queries from their rule bases and delegate
subgoals to each other through the broker.
"""

from .engine import (
    NonGroundNegation,
    RemoteError,
    SolveLimits,
    Solutions,
    check_stratified,
    solve,
    unify,
)
from .lang import (
    Literal,
    Rule,
    RuleBase,
    RuleSyntaxError,
    parse_program,
    parse_query,
    parse_term,
    serialize_term,
)
from .messaging import Message, decode, encode, new_cid

__all__ = [
    "Literal", "Message", "NonGroundNegation", "RemoteError", "Rule", "RuleBase",
    "RuleSyntaxError", "SolveLimits", "Solutions", "check_stratified", "decode",
    "encode", "new_cid", "parse_program", "parse_query", "parse_term",
    "serialize_term", "solve", "unify",
]
__version__ = "0.1.0"
