"""Backward-chaining inference over a :class:`~rule_responder.lang.RuleBase`.

The solver is a depth-first SLD machine with left-to-right goal selection
and source clause order.  It keeps bindings in one mutable dict with a
trail for undoing them, and a stack of choicepoints, so neither deep
derivations nor long conjunctions consume Python stack.

Built-ins: ``= == < <= > >= is findall/3 count/3 not/1 ask/2 delegate/1``
and ``and/N`` (conjunction, used for queries arriving over the wire).

``count(Template, Goal, N)`` groups by the variables written in ``Goal``
that are neither in ``Template`` nor anonymous (``_`` / ``_Name``) and are
still unbound at call time: with no such variable it yields the single
count (possibly 0), otherwise one count per distinct group binding, in
order of first appearance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Protocol

from .lang import Literal, RuleBase, parse_query, serialize_term
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
    is_ground,
    make_list,
    term_vars,
)

Substitution = dict  # Var -> Term
Answer = dict  # variable name -> Term

_SERIAL = itertools.count(1)


class EngineError(Exception):
    """Hard failure of a derivation."""


class NonGroundNegation(EngineError):
    def __init__(self, goal: Term) -> None:
        super().__init__(f"negated goal not ground: {serialize_term(goal)}")
        self.goal = goal


class BuiltinTypeError(EngineError):
    pass


class RemoteError(EngineError):
    """A remote ask/delegate failed; ``code`` is the wire error code."""

    def __init__(self, code: str, detail: str = "") -> None:
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


class NoResponsibleAgent(RemoteError):
    def __init__(self, pred: str) -> None:
        super().__init__("no_responsible_agent", pred)


class DepthLimitExceeded(Exception):
    """Internal signal; surfaces as ``Solutions.depth_exceeded``."""


class RemoteAsk(Protocol):
    def ask(self, agent: str, goal: Term) -> Iterable[Answer]: ...

    def responsible(self, goal: Term) -> str: ...


@dataclass(frozen=True)
class SolveLimits:
    max_depth: int = 5000
    max_answers: int | None = None

    def __post_init__(self) -> None:
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.max_answers is not None and self.max_answers < 1:
            raise ValueError("max_answers must be positive")


DEFAULT_LIMITS = SolveLimits()


# --------------------------------------------------------------------------
# substitutions


def _deref(t, b):
    while type(t) is Var:
        nt = b.get(t)
        if nt is None:
            return t
        t = nt
    return t


def _occurs(v: Var, t, b) -> bool:
    stack = [t]
    while stack:
        x = _deref(stack.pop(), b)
        tx = type(x)
        if tx is Var:
            if x == v:
                return True
        elif tx is Compound:
            stack.extend(x.args)
        elif tx is PList:
            stack.extend(x.items)
            if x.tail is not None:
                stack.append(x.tail)
    return False


def _unify(a, c, b: dict, trail: list) -> bool:
    stack = [(a, c)]
    while stack:
        x, y = stack.pop()
        x = _deref(x, b)
        y = _deref(y, b)
        if x is y:
            continue
        tx = type(x)
        ty = type(y)
        if tx is Var:
            if ty is Var and x == y:
                continue
            if ty in (Compound, PList) and _occurs(x, y, b):
                return False
            b[x] = y
            trail.append(x)
            continue
        if ty is Var:
            if tx in (Compound, PList) and _occurs(y, x, b):
                return False
            b[y] = x
            trail.append(y)
            continue
        if tx is not ty:
            return False
        if tx is Compound:
            if x.functor != y.functor or len(x.args) != len(y.args):
                return False
            stack.extend(zip(x.args, y.args))
        elif tx is PList:
            xs, ys = x.items, y.items
            n = min(len(xs), len(ys))
            stack.extend(zip(xs[:n], ys[:n]))
            if len(xs) == len(ys):
                if x.tail is not None or y.tail is not None:
                    stack.append((x.tail or NIL, y.tail or NIL))
            elif len(xs) < len(ys):
                if x.tail is None:
                    return False
                stack.append((x.tail, PList(ys[n:], y.tail)))
            else:
                if y.tail is None:
                    return False
                stack.append((PList(xs[n:], x.tail), y.tail))
        elif x != y:
            return False
    return True


def _resolve(t, b):
    tt = type(t)
    if tt is Var:
        d = _deref(t, b)
        return d if type(d) is Var else _resolve(d, b)
    if tt is Compound:
        args = t.args
        new = tuple([_resolve(a, b) for a in args])
        for x, y in zip(args, new):
            if x is not y:
                return Compound(t.functor, new)
        return t
    if tt is PList:
        items = tuple([_resolve(a, b) for a in t.items])
        tail = None if t.tail is None else _resolve(t.tail, b)
        if tail is t.tail and all(x is y for x, y in zip(items, t.items)):
            return t
        return make_list(items, tail)
    return t


def substitute(t: Term, s: Substitution) -> Term:
    """Apply ``s`` to ``t`` exhaustively."""
    return _resolve(t, s)


def unify(t1: Term, t2: Term, within: Substitution | None = None) -> Substitution | None:
    """Most general unifier of ``t1`` and ``t2`` extending ``within``.

    Returns an idempotent substitution, or ``None`` when the terms do not
    unify (including occurs-check failures).
    """
    b = dict(within or {})
    if not _unify(t1, t2, b, []):
        return None
    return {v: _resolve(t, b) for v, t in b.items()}


# --------------------------------------------------------------------------
# clause store


class _Clause:
    __slots__ = ("head", "body", "ground")

    def __init__(self, rule) -> None:
        self.head = rule.head
        self.body = tuple(lit.as_goal() for lit in rule.body)
        self.ground = not rule.body and is_ground(rule.head)

    def renamed(self) -> tuple[Term, tuple]:
        if self.ground:
            return self.head, ()
        m: dict = {}
        return _rename(self.head, m), tuple(_rename(g, m) for g in self.body)


def _rename(t, m):
    tt = type(t)
    if tt is Var:
        v = m.get(t)
        if v is None:
            v = m[t] = Var(t.name, next(_SERIAL))
        return v
    if tt is Compound:
        return Compound(t.functor, tuple([_rename(a, m) for a in t.args]))
    if tt is PList:
        return PList(
            tuple([_rename(a, m) for a in t.items]),
            None if t.tail is None else _rename(t.tail, m),
        )
    return t


def _index_key(t):
    tt = type(t)
    if tt is Const:
        return ("c", t.name)
    if tt is Str:
        return ("s", t.value)
    if tt is Int:
        return ("i", t.value)
    if tt is Compound:
        return ("f", t.functor, len(t.args))
    return None


_INDEX_MIN = 8


class _Pred:
    """Compiled clauses of one predicate with lazy per-argument indexes."""

    __slots__ = ("clauses", "arity", "_pos")

    def __init__(self, rules) -> None:
        self.clauses = [_Clause(r) for r in rules]
        self.arity = indicator(rules[0].head)[1] if rules else 0
        self._pos: dict[int, tuple[dict, list]] = {}

    def _position(self, i: int) -> tuple[dict, list]:
        idx = self._pos.get(i)
        if idx is None:
            keys = {}
            for c in self.clauses:
                k = _index_key(c.head.args[i])
                if k is not None:
                    keys[k] = []
            wild: list = []
            for c in self.clauses:
                k = _index_key(c.head.args[i])
                if k is None:
                    wild.append(c)
                    for lst in keys.values():
                        lst.append(c)
                else:
                    keys[k].append(c)
            idx = self._pos[i] = (keys, wild)
        return idx

    def candidates(self, args: tuple, b: dict) -> list:
        if len(self.clauses) < _INDEX_MIN:
            return self.clauses
        best = self.clauses
        for i, a in enumerate(args):
            k = _index_key(_deref(a, b))
            if k is None:
                continue
            keys, wild = self._position(i)
            lst = keys.get(k, wild)
            if len(lst) < len(best):
                best = lst
                if not best:
                    break
        return best


def _compiled(rb: RuleBase, key) -> _Pred | None:
    cache = rb.__dict__.get("_index")
    if cache is None:
        cache = rb.__dict__["_index"] = {}
    pred = cache.get(key)
    if pred is None:
        rules = rb.groups.get(key)
        if not rules:
            return None
        pred = cache[key] = _Pred(rules)
    return pred


# --------------------------------------------------------------------------
# the machine

_EXHAUSTED = object()


class _Counter:
    __slots__ = ("steps",)

    def __init__(self) -> None:
        self.steps = 0


class _Machine:
    def __init__(self, rb, remote, max_depth, counter, goals, depth=0) -> None:
        self.rb = rb
        self.remote = remote
        self.max_depth = max_depth
        self.counter = counter
        self.b: dict = {}
        self.trail: list = []
        cont = None
        for g in reversed(goals):
            cont = (g, depth, cont)
        self.start = cont

    # -- helpers -------------------------------------------------------

    def undo(self, mark: int) -> None:
        trail, b = self.trail, self.b
        while len(trail) > mark:
            del b[trail.pop()]

    def resolve(self, t):
        return _resolve(t, self.b)

    def unify(self, x, y) -> bool:
        return _unify(x, y, self.b, self.trail)

    def sub(self, goal, depth) -> "_Machine":
        return _Machine(self.rb, self.remote, self.max_depth, self.counter, [goal], depth)

    # -- main loop -----------------------------------------------------

    def run(self) -> Iterator[None]:
        """Yield once per solution; bindings are live in ``self.b`` then."""
        stack: list = []
        cont = self.start
        while True:
            if cont is None:
                yield None
                cont = self._backtrack(stack)
                if cont is _EXHAUSTED:
                    return
                continue
            goal, depth, rest = cont
            self.counter.steps += 1
            goal = _deref(goal, self.b)
            tg = type(goal)
            if tg is Compound:
                name, args = goal.functor, goal.args
            elif tg is Const:
                name, args = goal.name, ()
            elif tg is Var:
                raise BuiltinTypeError("goal is an unbound variable")
            else:
                raise BuiltinTypeError(f"goal is not callable: {serialize_term(goal)}")
            handler = _DET.get((name, len(args)))
            if handler is not None:
                if handler(self, args, depth):
                    cont = rest
                    continue
                cont = self._backtrack(stack)
            elif name == "and" and args:
                for g in reversed(args):
                    rest = (g, depth, rest)
                cont = rest
                continue
            else:
                gen = _NONDET.get((name, len(args)))
                if gen is not None:
                    alts = gen(self, args, depth, rest)
                else:
                    pred = _compiled(self.rb, (name, len(args)))
                    if pred is None:
                        cont = self._backtrack(stack)
                        if cont is _EXHAUSTED:
                            return
                        continue
                    if depth >= self.max_depth:
                        raise DepthLimitExceeded()
                    alts = self._clauses(goal, args, pred, depth, rest)
                stack.append((alts, len(self.trail)))
                cont = self._backtrack(stack)
            if cont is _EXHAUSTED:
                return

    def _backtrack(self, stack):
        while stack:
            alts, mark = stack[-1]
            self.undo(mark)
            nxt = next(alts, _EXHAUSTED)
            if nxt is not _EXHAUSTED:
                return nxt
            stack.pop()
        return _EXHAUSTED

    def _clauses(self, goal, args, pred, depth, rest):
        mark = len(self.trail)
        d1 = depth + 1
        for clause in pred.candidates(args, self.b):
            self.undo(mark)
            head, body = clause.renamed()
            if self.unify(goal, head):
                cont = rest
                for g in reversed(body):
                    cont = (g, d1, cont)
                yield cont

    def solutions_of(self, template, goal, depth) -> list:
        """Instantiations of ``template`` over all solutions of ``goal``."""
        m = self.sub(goal, depth)
        return [m.resolve(template) for _ in m.run()]


# --------------------------------------------------------------------------
# built-ins


def _int_arg(m: _Machine, t, op: str) -> int:
    v = m.resolve(t)
    if type(v) is not Int:
        raise BuiltinTypeError(f"{op}: expected integer, got {serialize_term(v)}")
    return v.value


def _cmp(op):
    def run(m: _Machine, args, depth) -> bool:
        a = _int_arg(m, args[0], op)
        c = _int_arg(m, args[1], op)
        return _CMP_OPS[op](a, c)

    return run


_CMP_OPS = {
    "<": lambda a, c: a < c,
    "<=": lambda a, c: a <= c,
    ">": lambda a, c: a > c,
    ">=": lambda a, c: a >= c,
}


def _eval(m: _Machine, t) -> int:
    t = _deref(t, m.b)
    tt = type(t)
    if tt is Int:
        return t.value
    if tt is Var:
        raise BuiltinTypeError("is: arithmetic argument is unbound")
    if tt is Compound:
        f, args = t.functor, t.args
        if len(args) == 2 and f in ("+", "-", "*", "div", "mod"):
            x = _eval(m, args[0])
            y = _eval(m, args[1])
            if f == "+":
                r = x + y
            elif f == "-":
                r = x - y
            elif f == "*":
                r = x * y
            elif y == 0:
                raise BuiltinTypeError(f"is: {f} by zero")
            elif f == "div":
                r = x // y
            else:
                r = x % y
        elif len(args) == 1 and f == "-":
            r = -_eval(m, args[0])
        else:
            raise BuiltinTypeError(f"is: unknown arithmetic function {f}/{len(args)}")
        if not INT_MIN <= r <= INT_MAX:
            raise BuiltinTypeError("is: integer overflow")
        return r
    raise BuiltinTypeError(f"is: not an integer expression: {serialize_term(_resolve(t, m.b))}")


def _bi_is(m: _Machine, args, depth) -> bool:
    return m.unify(args[0], Int(_eval(m, args[1])))


def _bi_unify(m: _Machine, args, depth) -> bool:
    return m.unify(args[0], args[1])


def _bi_eq(m: _Machine, args, depth) -> bool:
    return m.resolve(args[0]) == m.resolve(args[1])


def _callable(m: _Machine, goal, who: str):
    g = m.resolve(goal)
    if not is_atom(g):
        raise BuiltinTypeError(f"{who}: goal is not callable: {serialize_term(g)}")
    return g


def _bi_not(m: _Machine, args, depth) -> bool:
    g = _callable(m, args[0], "not")
    if not is_ground(g):
        raise NonGroundNegation(g)
    for _ in m.sub(g, depth).run():
        return False
    return True


def _bi_findall(m: _Machine, args, depth) -> bool:
    g = _callable(m, args[1], "findall")
    items = m.solutions_of(m.resolve(args[0]), g, depth)
    return m.unify(args[2], make_list(items))


def _count(m: _Machine, args, depth, rest):
    # Grouping looks at the variables as written in the calling clause, so
    # a caller's anonymous variable bound to a group position still groups.
    raw_goal = _deref(args[1], m.b)
    skip = set(term_vars(_deref(args[0], m.b)))
    group = [
        v for v in term_vars(raw_goal)
        if v not in skip and not v.anonymous and not is_ground(m.resolve(v))
    ]
    template = m.resolve(args[0])
    g = _callable(m, raw_goal, "count")
    mark = len(m.trail)
    if not group:
        n = len(m.solutions_of(template, g, depth))
        if m.unify(args[2], Int(n)):
            yield rest
        return
    key = m.resolve(Compound("g", tuple(group)))
    counts: dict = {}
    for k in m.solutions_of(key, g, depth):
        counts[k] = counts.get(k, 0) + 1
    target = Compound("g", (key, args[2]))
    for k, n in counts.items():
        m.undo(mark)
        if m.unify(target, Compound("g", (k, Int(n)))):
            yield rest


def _wire_goal(goal):
    """Rename the goal's variables to distinct plain names for transport."""
    mapping: dict = {}
    used: set = set()
    anon = 0
    for v in term_vars(goal):
        if v.anonymous:
            anon += 1
            name = f"_{anon}"
        else:
            name, k = v.name, 1
            while name in used:
                k += 1
                name = f"{v.name}_{k}"
        used.add(name)
        mapping[v] = Var(name)
    return _rename_to(goal, mapping), mapping


def _rename_to(t, mapping):
    tt = type(t)
    if tt is Var:
        return mapping[t]
    if tt is Compound:
        return Compound(t.functor, tuple([_rename_to(a, mapping) for a in t.args]))
    if tt is PList:
        return make_list(
            [_rename_to(a, mapping) for a in t.items],
            None if t.tail is None else _rename_to(t.tail, mapping),
        )
    return t


def _remote(m: _Machine, target: str, goal, rest):
    if m.remote is None:
        raise RemoteError("no_remote", "no remote handle for ask/delegate")
    wire, mapping = _wire_goal(goal)
    mark = len(m.trail)
    for answer in m.remote.ask(target, wire):
        m.undo(mark)
        ok = True
        for v, wv in mapping.items():
            val = answer.get(wv.name)
            if val is not None and not m.unify(v, val):
                ok = False
                break
        if ok:
            yield rest


def _bi_ask(m: _Machine, args, depth, rest):
    agent = m.resolve(args[0])
    if type(agent) is not Const:
        raise BuiltinTypeError(f"ask: agent must be a name, got {serialize_term(agent)}")
    return _remote(m, agent.name, _callable(m, args[1], "ask"), rest)


def _bi_delegate(m: _Machine, args, depth, rest):
    g = _callable(m, args[0], "delegate")
    if m.remote is None:
        raise RemoteError("no_remote", "no remote handle for ask/delegate")
    return _remote(m, m.remote.responsible(g), g, rest)


_DET = {
    ("=", 2): _bi_unify,
    ("==", 2): _bi_eq,
    ("is", 2): _bi_is,
    ("not", 1): _bi_not,
    ("findall", 3): _bi_findall,
    **{(op, 2): _cmp(op) for op in _CMP_OPS},
}
_NONDET = {
    ("count", 3): _count,
    ("ask", 2): _bi_ask,
    ("delegate", 1): _bi_delegate,
}


# --------------------------------------------------------------------------
# public solve


class Solutions:
    """Lazy, deduplicated stream of answers for one query.

    ``depth_exceeded`` turns true when the stream ended early because a
    derivation reached ``max_depth``; answers already produced stay valid.
    ``steps`` counts goal selections performed so far.
    """

    def __init__(self, rb: RuleBase, goals: list[Term], limits: SolveLimits, remote) -> None:
        local = _template_only_vars(goals)
        self.query_vars = [
            v for g in goals for v in term_vars(g) if not v.anonymous and v not in local
        ]
        self.query_vars = list(dict.fromkeys(self.query_vars))
        self._counter = _Counter()
        self._m = _Machine(rb, remote, limits.max_depth, self._counter, goals)
        self._run = self._m.run()
        self._seen: set = set()
        self._max = limits.max_answers
        self.depth_exceeded = False
        self.count = 0
        self._done = False

    @property
    def steps(self) -> int:
        return self._counter.steps

    def __iter__(self) -> "Solutions":
        return self

    def __next__(self) -> Answer:
        if self._done or (self._max is not None and self.count >= self._max):
            raise StopIteration
        m = self._m
        try:
            for _ in self._run:
                values = tuple(_rename_free(m.resolve(v) for v in self.query_vars))
                if values in self._seen:
                    continue
                self._seen.add(values)
                self.count += 1
                return {v.name: t for v, t in zip(self.query_vars, values)}
        except DepthLimitExceeded:
            self.depth_exceeded = True
        self._done = True
        raise StopIteration

    def close(self) -> None:
        self._done = True
        self._run.close()


def _template_only_vars(goals) -> set:
    """Query variables that only occur in findall/count templates.

    Those are local to the aggregate and never bound in an answer, so they
    are left out of the reported bindings.
    """
    inside, outside = set(), set()
    stack = list(goals)
    while stack:
        g = stack.pop()
        if isinstance(g, Compound) and g.functor in ("findall", "count") and len(g.args) == 3:
            local = set(term_vars(g.args[0]))
            inside |= local
            outside.update(v for v in term_vars(g.args[1]) if v not in local)
            outside.update(term_vars(g.args[2]))
        elif isinstance(g, Compound) and g.functor in ("and", "not"):
            stack.extend(g.args)
        else:
            outside.update(term_vars(g))
    return inside - outside


def _rename_free(values: Iterable[Term]) -> list[Term]:
    """Give unbound answer variables stable names ``_G1``, ``_G2``, ..."""
    values = list(values)
    mapping: dict = {}
    for t in values:
        for v in term_vars(t):
            if v not in mapping:
                mapping[v] = Var(f"_G{len(mapping) + 1}")
    if not mapping:
        return values
    return [_rename_to(t, mapping) for t in values]


def solve(
    rb: RuleBase,
    goals,
    limits: SolveLimits | None = None,
    remote: RemoteAsk | None = None,
) -> Solutions:
    """Answers for ``goals`` (query text, a list of literals, or one goal term)."""
    if isinstance(goals, str):
        goals = parse_query(goals)
    elif not isinstance(goals, (list, tuple)):
        goals = [goals]
    terms = [g.as_goal() if isinstance(g, Literal) else g for g in goals]
    return Solutions(rb, terms, limits or DEFAULT_LIMITS, remote)


# --------------------------------------------------------------------------
# stratification


@dataclass(frozen=True)
class Stratification:
    ok: bool
    cycle: tuple[str, ...] = ()
    edges: dict = field(default_factory=dict, compare=False, repr=False)

    def __bool__(self) -> bool:
        return self.ok

    def describe(self) -> str:
        if self.ok:
            return "ok"
        return "cycle through negation: " + " ⊣ ".join(self.cycle)


def _body_edges(goal, negative: bool, out: list) -> None:
    if isinstance(goal, Var) or not is_atom(goal):
        return
    name, arity = indicator(goal)
    args = goal.args if isinstance(goal, Compound) else ()
    if (name, arity) == ("not", 1):
        _body_edges(args[0], True, out)
    elif (name, arity) in (("findall", 3), ("count", 3)):
        _body_edges(args[1], True, out)
    elif name == "and":
        for g in args:
            _body_edges(g, negative, out)
    elif (name, arity) in _DET or (name, arity) in _NONDET:
        return  # comparisons, arithmetic, ask/delegate
    else:
        out.append(((name, arity), negative))


def dependency_graph(rb: RuleBase) -> dict:
    """``{pred: {dep: negative?}}``; an edge is negative if any use is."""
    graph: dict = {k: {} for k in rb.predicates()}
    for rule in rb:
        deps = graph[rule.key]
        for lit in rule.body:
            found: list = []
            _body_edges(lit.as_goal(), False, found)
            for dep, neg in found:
                deps[dep] = deps.get(dep, False) or neg
                graph.setdefault(dep, {})
    return graph


def _sccs(graph: dict) -> dict:
    """Tarjan's algorithm, iterative; returns node -> component id."""
    index: dict = {}
    low: dict = {}
    comp: dict = {}
    onstack: set = set()
    st: list = []
    counter = 0
    for root in graph:
        if root in index:
            continue
        work = [(root, iter(graph[root]))]
        index[root] = low[root] = counter
        counter += 1
        st.append(root)
        onstack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter
                    counter += 1
                    st.append(nxt)
                    onstack.add(nxt)
                    work.append((nxt, iter(graph[nxt])))
                    advanced = True
                    break
                if nxt in onstack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                while True:
                    x = st.pop()
                    onstack.discard(x)
                    comp[x] = node
                    if x == node:
                        break
    return comp


def _path(graph, comp, src, dst) -> list:
    """Shortest path src -> dst staying inside one component."""
    prev = {src: None}
    queue = [src]
    for node in queue:
        if node == dst:
            break
        for nxt in graph[node]:
            if nxt not in prev and comp[nxt] == comp[src]:
                prev[nxt] = node
                queue.append(nxt)
    path = [dst]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


def check_stratified(rb: RuleBase) -> Stratification:
    """Reject rule bases with a negative (or aggregate) edge on a cycle.

    ``ask``/``delegate`` calls are opaque: remote predicates are not expanded.
    """
    graph = dependency_graph(rb)
    comp = _sccs(graph)
    for head, deps in graph.items():
        for dep, negative in deps.items():
            if negative and comp[head] == comp[dep]:
                cycle = [head] + (_path(graph, comp, dep, head) if dep != head else [head])
                return Stratification(False, tuple(f"{n}/{a}" for n, a in cycle), graph)
    return Stratification(True, (), graph)
