"""Generators and independent oracles shared by the test modules."""

from __future__ import annotations

import itertools
import random
import string

from hypothesis import strategies as st

from rule_responder.messaging import Message, bindings_term
from rule_responder.terms import INT_MAX, INT_MIN, Compound, Const, Int, PList, Str, Var, make_list

NAME_CHARS = string.ascii_letters + string.digits + "_"
OPERATORS = ("+", "-", "*", "div", "mod", "is", "=", "==", "<", "<=", ">", ">=")


# --------------------------------------------------------------------------
# terms


def _name(rng: random.Random, first: str) -> str:
    return rng.choice(first) + "".join(rng.choice(NAME_CHARS) for _ in range(rng.randint(0, 6)))


def _text(rng: random.Random) -> str:
    alphabet = string.printable + "é中\"\\\n"
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 10)))


def random_term(rng: random.Random, depth: int = 0, ground: bool = False):
    """A random term; compounds and lists thin out with depth."""
    roll = rng.random()
    if depth > 3 or roll < 0.45:
        kind = rng.randrange(4 if ground else 5)
        if kind == 0:
            return Const(_name(rng, string.ascii_lowercase))
        if kind == 1:
            return Int(rng.choice([0, 1, -1, INT_MIN, INT_MAX, rng.randint(-10**6, 10**6)]))
        if kind == 2:
            return Str(_text(rng))
        if kind == 3:
            return make_list([])
        name = _name(rng, string.ascii_uppercase + "_")
        return Var(name if name != "_" else "_V")
    n = rng.randint(1, 4)
    args = [random_term(rng, depth + 1, ground) for _ in range(n)]
    if roll < 0.8:
        functor = _name(rng, string.ascii_lowercase)
        if rng.random() < 0.2:
            functor = rng.choice(OPERATORS + ("not", "and"))
        return Compound(functor, tuple(args))
    tail = None
    if not ground and rng.random() < 0.3:
        tail = rng.choice([Var("T"), random_term(rng, depth + 1, ground)])
    return make_list(args, tail)


_names_lower = st.from_regex(r"[a-z][A-Za-z0-9_]{0,5}", fullmatch=True)
_names_upper = st.from_regex(r"[A-Z_][A-Za-z0-9_]{0,5}", fullmatch=True).filter(lambda s: s != "_")


def terms(ground: bool = False, max_leaves: int = 20):
    """Hypothesis strategy for canonical terms."""
    leaves = [
        _names_lower.map(Const),
        st.integers(INT_MIN, INT_MAX).map(Int),
        st.text(max_size=8).map(Str),
        st.just(make_list([])),
    ]
    if not ground:
        leaves.append(_names_upper.map(Var))
    functors = _names_lower | st.sampled_from(OPERATORS + ("not", "and"))

    def extend(children):
        args = st.lists(children, min_size=1, max_size=4)
        return st.one_of(
            st.builds(lambda f, a: Compound(f, tuple(a)), functors, args),
            args.map(make_list),
        )

    return st.recursive(st.one_of(leaves), extend, max_leaves=max_leaves)


# --------------------------------------------------------------------------
# messages

PERFS = ("register", "ack", "query", "answer", "end_of_answers", "error")


def random_message(rng: random.Random) -> Message:
    cid = "".join(rng.choice(string.ascii_letters + string.digits + "-_ é\"\\") for _ in range(rng.randint(1, 40)))
    sender = _name(rng, string.ascii_lowercase)
    receiver = _name(rng, string.ascii_lowercase)
    perf = rng.choice(PERFS)
    if perf == "register":
        return Message.register(cid, sender, receiver)
    if perf == "query":
        goal = random_term(rng, 1)
        while not isinstance(goal, (Compound, Const)) or isinstance(goal, PList):
            goal = random_term(rng, 1)
        return Message(cid, sender, receiver, perf, goal)
    if perf == "answer":
        binds = {_name(rng, string.ascii_uppercase): random_term(rng, 1, ground=True) for _ in range(rng.randint(0, 4))}
        return Message(cid, sender, receiver, perf, bindings_term(binds))
    if perf == "error":
        return Message.error(cid, sender, receiver, _name(rng, string.ascii_lowercase), _text(rng))
    return Message(cid, sender, receiver, perf)


# --------------------------------------------------------------------------
# random stratified programs and a bottom-up oracle

CONSTANTS = ("a", "b", "c", "d")
VARIABLES = ("X", "Y", "Z", "W")
BASE = {"e0": 1, "e1": 2, "e2": 2}


def random_program(rng: random.Random):
    """A function-free, non-recursive stratified program.

    Returns ``(text, arities)``.  Derived predicate ``p<i>`` only refers to
    base predicates and ``p<j>`` with ``j < i``, so the predicate order is a
    valid stratification.  Every rule is range restricted and every negated
    literal is ground by the time it is selected.
    """
    arities = dict(BASE)
    lines = []
    for _ in range(rng.randint(0, 20)):
        pred = rng.choice(list(BASE))
        args = ",".join(rng.choice(CONSTANTS) for _ in range(BASE[pred]))
        lines.append(f"{pred}({args}).")
    n_derived = rng.randint(1, 3)
    derived = [f"p{i}" for i in range(n_derived)]
    for p in derived:
        arities[p] = rng.randint(0, 2)
    for _ in range(rng.randint(1, 5)):
        i = rng.randrange(n_derived)
        head = derived[i]
        usable = list(BASE) + derived[:i]
        body, bound = [], []
        for _ in range(rng.randint(1, 3)):
            pred = rng.choice(usable)
            args = [rng.choice(VARIABLES[:3]) if rng.random() < 0.75 else rng.choice(CONSTANTS) for _ in range(arities[pred])]
            bound += [a for a in args if a[0].isupper()]
            body.append(_atom(pred, args))
        terms_ = bound + list(CONSTANTS) if bound else list(CONSTANTS)
        if bound and rng.random() < 0.3:
            body.append(f"{rng.choice(bound)} = {rng.choice(terms_)}")
        if bound and rng.random() < 0.2:
            body.append(f"{rng.choice(bound)} == {rng.choice(terms_)}")
        for _ in range(rng.choice([0, 0, 1, 2])):
            pred = rng.choice(usable)
            body.append("not " + _atom(pred, [rng.choice(terms_) for _ in range(arities[pred])]))
        head_args = [rng.choice(terms_) for _ in range(arities[head])]
        lines.append(f"{_atom(head, head_args)} :- {', '.join(body)}.")
    return "\n".join(lines) + "\n", arities


def _atom(pred: str, args) -> str:
    return f"{pred}({','.join(args)})" if args else pred


def oracle_model(text: str, arities: dict) -> dict:
    """Least stratified model by naive bottom-up evaluation.

    Works on the program text directly with its own small reader, so it
    shares nothing with the parser or the SLD engine.  Predicates are
    evaluated stratum by stratum in definition order (``e*`` first, then
    ``p0``, ``p1`` ...), each to a fixpoint, enumerating every variable
    assignment over the active domain.
    """
    facts: dict[str, set] = {p: set() for p in arities}
    rules = []
    for line in text.splitlines():
        line = line.strip().rstrip(".")
        if not line:
            continue
        if ":-" not in line:
            pred, args = _read_atom(line)
            facts[pred].add(args)
            continue
        head, body = line.split(":-")
        rules.append((_read_atom(head.strip()), [_read_literal(b.strip()) for b in _split_body(body)]))
    domain = sorted(set(CONSTANTS))
    order = [p for p in arities if p.startswith("e")] + sorted(p for p in arities if p.startswith("p"))
    for pred in order:
        mine = [r for r in rules if r[0][0] == pred]
        changed = True
        while changed:
            changed = False
            for (hp, hargs), body in mine:
                vars_ = sorted({a for _, x, args in body for a in args if a[0].isupper()} | {a for a in hargs if a[0].isupper()})
                for values in itertools.product(domain, repeat=len(vars_)):
                    env = dict(zip(vars_, values))
                    if all(_holds(lit, env, facts) for lit in body):
                        t = tuple(env.get(a, a) for a in hargs)
                        if t not in facts[hp]:
                            facts[hp].add(t)
                            changed = True
    return facts


def _split_body(body: str) -> list[str]:
    parts, depth, cur = [], 0, ""
    for ch in body:
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur += ch
    parts.append(cur)
    return parts


def _read_atom(s: str):
    if "(" not in s:
        return s, ()
    name, rest = s.split("(", 1)
    return name, tuple(a.strip() for a in rest.rstrip(")").split(","))


def _read_literal(s: str):
    if s.startswith("not "):
        name, args = _read_atom(s[4:].strip())
        return ("not", name, args)
    for op in ("==", "="):
        if f" {op} " in s:
            left, right = s.split(f" {op} ")
            return ("eq", op, (left.strip(), right.strip()))
    name, args = _read_atom(s)
    return ("pos", name, args)


def _holds(lit, env, facts) -> bool:
    kind, name, args = lit
    vals = tuple(env.get(a, a) for a in args)
    if kind == "eq":
        return vals[0] == vals[1]
    if kind == "pos":
        return vals in facts[name]
    return vals not in facts[name]


# --------------------------------------------------------------------------
# brute-force oracle over the use-case csv rows


def _argmax(counts: dict) -> set:
    best = max(counts.values(), default=0)
    return {k for k, n in counts.items() if n == best} if best > 0 else set()


def usecase_oracle(publications: list[dict], patents: list[dict]) -> dict:
    """Expected relations computed by plain counting, no rule engine."""
    fields = {p["field"] for p in publications}
    pub_count: dict = {}
    loc_count: dict = {}
    for p in publications:
        pub_count[(p["author"], p["field"])] = pub_count.get((p["author"], p["field"]), 0) + 1
        loc_count[(p["location"], p["field"])] = loc_count.get((p["location"], p["field"]), 0) + 1
    patent_count: dict = {}
    for p in patents:
        patent_count[(p["holder"], p["field"])] = patent_count.get((p["holder"], p["field"]), 0) + 1
    top_author = {
        (f, a) for f in fields for a in _argmax({a: n for (a, ff), n in pub_count.items() if ff == f})
    }
    top_location = {
        (f, loc) for f in fields for loc in _argmax({loc: n for (loc, ff), n in loc_count.items() if ff == f})
    }
    expert = {(a, f) for f, a in top_author if patent_count.get((a, f), 0) >= 1}
    return {
        "pub_count": {(a, f, n) for (a, f), n in pub_count.items()},
        "top_author": top_author,
        "top_location": top_location,
        "has_patent": set(patent_count),
        "patent_count": {(a, f, n) for (a, f), n in patent_count.items()},
        "expert": expert,
        "expert_patents": {(a, f, patent_count[(a, f)]) for a, f in expert},
    }
