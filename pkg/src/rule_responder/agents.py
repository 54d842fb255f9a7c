"""Agent runtime: organizational and source agents plus a query client.

An agent owns a rule base (rules from a ``.rr`` file plus facts ingested
from its data adapters), registers with the broker, and answers ``query``
messages for the predicates it exports.  Rules may call ``ask/2`` and
``delegate/1``; those become sub-conversations with other agents through
the broker.

Agent config files are JSON objects with these keys (paths are relative to
the config file)::

    name              agent name, e.g. "pubmed_agent"
    role              "organizational" or "source"
    rulebase_path     the agent's .rr file
    public_interface  ["top_author/2", ...]
    responsibility    list of {"predicate", "arity", "agent"} objects, or a
                      path to a JSON file holding that list (organizational)
    adapters          list of {"kind": "csv" | "json-facts", "path",
                      "predicate", "columns": [...], "integer_columns": [...]}
                      (source)
    broker            "host:port" (optional; CLI flag / RR_BROKER override)
    query_timeout_ms  per-query deadline, default 5000
"""

from __future__ import annotations

import csv
import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .engine import (
    EngineError,
    NoResponsibleAgent,
    RemoteError,
    SolveLimits,
    check_stratified,
    solve,
)
from .lang import BUILTINS, RuleBase, RuleSyntaxError, Rule, parse_program, parse_query
from .messaging import (
    InvalidContentShape,
    Message,
    MessageError,
    decode,
    encode,
    goal_term,
    new_cid,
)
from .terms import INT_MAX, INT_MIN, Compound, Const, Int, Str, Term, indicator, is_atom, is_ground
from .transport import ConnectionClosed, TcpConnection

log = logging.getLogger(__name__)

DEFAULT_BROKER = "127.0.0.1:7700"
ROLES = ("organizational", "source")


class ConfigError(Exception):
    """A load-time precondition failed; ``field`` names which one."""

    def __init__(self, field: str, detail: str) -> None:
        super().__init__(f"{field}: {detail}")
        self.field = field
        self.detail = detail


class IngestError(Exception):
    def __init__(self, row: int, reason: str) -> None:
        super().__init__(f"row {row}: {reason}")
        self.row = row
        self.reason = reason


class AdapterMappingError(IngestError):
    """The template names a column the data file does not have."""


class BrokerUnavailable(Exception):
    pass


@dataclass(frozen=True)
class ResponsibilityAssignment:
    predicate: str
    arity: int
    agent: str


@dataclass(frozen=True)
class DataAdapterSpec:
    kind: str
    path: Path
    predicate: str
    columns: tuple[str, ...]
    integer_columns: frozenset = frozenset()


@dataclass
class AgentConfig:
    name: str
    role: str
    rulebase_path: Path
    public_interface: list[tuple[str, int]] = field(default_factory=list)
    responsibility: list[ResponsibilityAssignment] = field(default_factory=list)
    adapters: list[DataAdapterSpec] = field(default_factory=list)
    broker: str | None = None
    query_timeout_ms: int = 5000


# --------------------------------------------------------------------------
# config files


def _pred_indicator(text: str) -> tuple[str, int]:
    name, sep, arity = text.rpartition("/")
    if not sep or not arity.isdigit() or not name:
        raise ValueError(f"expected name/arity, got {text!r}")
    return name, int(arity)


def _require(doc: dict, key: str, kind):
    if key not in doc:
        raise ConfigError(key, "missing")
    value = doc[key]
    if not isinstance(value, kind):
        raise ConfigError(key, f"expected {getattr(kind, '__name__', kind)}")
    return value


def _responsibility(value, base: Path) -> list[ResponsibilityAssignment]:
    if isinstance(value, str):
        path = base / value
        try:
            value = json.loads(path.read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError("responsibility", f"cannot read {path}: {e.strerror}") from None
        except json.JSONDecodeError as e:
            raise ConfigError("responsibility", f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(value, list):
        raise ConfigError("responsibility", "expected a list")
    out = []
    for entry in value:
        try:
            out.append(ResponsibilityAssignment(str(entry["predicate"]), int(entry["arity"]), str(entry["agent"])))
        except (KeyError, TypeError, ValueError):
            raise ConfigError("responsibility", f"bad entry {entry!r}") from None
    return out


def _adapter(entry, base: Path) -> DataAdapterSpec:
    try:
        kind = entry["kind"]
        if kind not in ("csv", "json-facts"):
            raise ConfigError("adapters", f"unknown adapter kind {kind!r}")
        columns = tuple(entry["columns"])
        ints = frozenset(entry.get("integer_columns", ()))
        return DataAdapterSpec(kind, base / entry["path"], entry["predicate"], columns, ints)
    except (KeyError, TypeError):
        raise ConfigError("adapters", f"bad adapter entry {entry!r}") from None


def config_from_dict(doc: dict, base: Path = Path(".")) -> AgentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config", "expected a JSON object")
    name = _require(doc, "name", str)
    role = _require(doc, "role", str)
    if role not in ROLES:
        raise ConfigError("role", f"must be one of {ROLES}")
    try:
        public = [_pred_indicator(p) for p in doc.get("public_interface", [])]
    except (ValueError, TypeError) as e:
        raise ConfigError("public_interface", str(e)) from None
    timeout = doc.get("query_timeout_ms", 5000)
    if not isinstance(timeout, int) or timeout < 1:
        raise ConfigError("query_timeout_ms", "must be a positive integer")
    return AgentConfig(
        name=name,
        role=role,
        rulebase_path=base / _require(doc, "rulebase_path", str),
        public_interface=public,
        responsibility=_responsibility(doc.get("responsibility", []), base),
        adapters=[_adapter(a, base) for a in doc.get("adapters", [])],
        broker=doc.get("broker"),
        query_timeout_ms=timeout,
    )


def load_config(path) -> AgentConfig:
    """Read an agent config JSON file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError("config", f"cannot read {path}: {e.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    return config_from_dict(doc, path.parent)


# --------------------------------------------------------------------------
# data adapters


def _cell(value, column: str, integer: bool, row: int) -> Term:
    if integer:
        try:
            if isinstance(value, bool):
                raise ValueError
            n = int(value)
        except (TypeError, ValueError):
            raise IngestError(row, f"bad_integer in column {column!r}") from None
        if not INT_MIN <= n <= INT_MAX:
            raise IngestError(row, f"integer out of range in column {column!r}")
        return Int(n)
    if isinstance(value, bool) or not isinstance(value, (str, int)):
        raise IngestError(row, f"unsupported value in column {column!r}")
    if isinstance(value, int):
        return Int(value)
    return Str(value)


def _fact(spec: DataAdapterSpec, record: dict, row: int) -> Rule:
    args = []
    for col in spec.columns:
        value = record.get(col)
        if value is None:
            raise IngestError(row, f"missing_field {col!r}")
        args.append(_cell(value, col, col in spec.integer_columns, row))
    return Rule(Compound(spec.predicate, tuple(args)))


def ingest(spec: DataAdapterSpec) -> list[Rule]:
    """Facts for every data row, in row order.  Rows are numbered from 1."""
    try:
        if spec.kind == "csv":
            return _ingest_csv(spec)
        return _ingest_json(spec)
    except OSError as e:
        raise IngestError(0, f"cannot read {spec.path}: {e.strerror}") from None


def _ingest_csv(spec: DataAdapterSpec) -> list[Rule]:
    with open(spec.path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise AdapterMappingError(0, "missing header row")
        header = [h.strip() for h in header]
        missing = [c for c in spec.columns if c not in header]
        if missing:
            raise AdapterMappingError(0, f"unknown column(s) {missing}")
        facts = []
        for row, values in enumerate(reader, start=1):
            if not values:
                continue
            if len(values) > len(header):
                raise IngestError(row, "extra_field")
            facts.append(_fact(spec, dict(zip(header, values)), row))
        return facts


def _ingest_json(spec: DataAdapterSpec) -> list[Rule]:
    with open(spec.path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise IngestError(0, f"invalid JSON at line {e.lineno}: {e.msg}") from None
    if not isinstance(doc, list):
        raise IngestError(0, "expected a top-level array")
    facts = []
    for row, record in enumerate(doc, start=1):
        if not isinstance(record, dict):
            raise IngestError(row, "expected an object")
        facts.append(_fact(spec, record, row))
    return facts


# --------------------------------------------------------------------------
# rule base assembly


def build_rulebase(cfg: AgentConfig) -> RuleBase:
    """Parse, ingest and validate everything an agent needs before it runs."""
    if cfg.role == "source" and cfg.responsibility:
        raise ConfigError("responsibility", "only organizational agents delegate")
    if cfg.role == "organizational" and cfg.adapters:
        raise ConfigError("adapters", "only source agents wrap data sources")
    try:
        text = Path(cfg.rulebase_path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError("rulebase_path", f"cannot read {cfg.rulebase_path}: {e.strerror}") from None
    try:
        rb = parse_program(text)
    except RuleSyntaxError as e:
        raise ConfigError("rulebase_path", f"{cfg.rulebase_path}: {e}") from None
    for spec in cfg.adapters:
        try:
            rb.extend(ingest(spec))
        except AdapterMappingError as e:
            raise ConfigError("bad_adapter_mapping", f"{spec.path}: {e.reason}") from None
        except IngestError as e:
            raise ConfigError("adapters", f"{spec.path}: {e}") from None

    heads = set(rb.predicates())
    seen = set()
    for r in cfg.responsibility:
        key = (r.predicate, r.arity)
        if key in heads:
            raise ConfigError("conflicting_responsibility", f"{r.predicate}/{r.arity} is defined locally")
        if key in seen:
            raise ConfigError("responsibility", f"{r.predicate}/{r.arity} assigned twice")
        seen.add(key)
    for name, arity in cfg.public_interface:
        if (name, arity) not in heads:
            raise ConfigError("public_interface", f"{name}/{arity} is not defined by the rule base")
    strat = check_stratified(rb)
    if not strat:
        raise ConfigError("not_stratified", strat.describe())
    return rb


def exported_violation(goal: Term, public: set) -> str | None:
    """First predicate reachable from a query goal that is not exported."""
    stack = [goal]
    while stack:
        g = stack.pop()
        if not is_atom(g):
            return "non-callable goal"
        name, arity = indicator(g)
        args = g.args if isinstance(g, Compound) else ()
        if name == "and":
            stack.extend(args)
        elif (name, arity) == ("not", 1):
            stack.append(args[0])
        elif (name, arity) in (("findall", 3), ("count", 3)):
            stack.append(args[1])
        elif name in ("ask", "delegate"):
            return f"{name}/{arity}"
        elif name in BUILTINS and arity == 2:
            continue  # comparison or arithmetic
        elif (name, arity) not in public:
            return f"{name}/{arity}"
    return None


# --------------------------------------------------------------------------
# the agent


class _Remote:
    """RemoteAsk handle bound to one incoming conversation's deadline."""

    def __init__(self, agent: "Agent", deadline: float) -> None:
        self.agent = agent
        self.deadline = deadline

    def ask(self, target: str, goal: Term):
        sub = min(self.deadline, time.monotonic() + self.agent.config.query_timeout_ms / 1000)
        return self.agent.perform_ask(target, goal, sub)

    def responsible(self, goal: Term) -> str:
        return self.agent.resolve_responsibility(goal)


class Agent:
    def __init__(self, config: AgentConfig, rulebase: RuleBase, connection, limits: SolveLimits | None = None) -> None:
        self.config = config
        self.name = config.name
        self.rulebase = rulebase
        self.conn = connection
        self.limits = limits or SolveLimits()
        self.public = set(config.public_interface)
        self.table = {(r.predicate, r.arity): r.agent for r in config.responsibility}
        self._pending: dict[str, queue.Queue] = {}
        self._pending_lock = threading.Lock()
        self._thread: threading.Thread | None = None
        self._stopped = threading.Event()

    # -- lifecycle -----------------------------------------------------

    def start(self, timeout: float = 5.0) -> "Agent":
        register(self.conn, self.name, timeout)
        self._thread = threading.Thread(target=self._loop, name=f"agent-{self.name}", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stopped.set()
        self.conn.close()
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def wait(self) -> None:
        """Block until the broker connection goes away."""
        if self._thread is not None:
            while self._thread.is_alive():
                self._thread.join(timeout=0.5)

    def _send(self, m: Message) -> None:
        self.conn.send(encode(m))

    def _loop(self) -> None:
        while not self._stopped.is_set():
            try:
                data = self.conn.recv(None)
            except ConnectionClosed:
                break
            try:
                m = decode(data)
            except InvalidContentShape:
                m = self._malformed_reply(data)
                if m is None:
                    continue
            except MessageError as e:
                log.warning("%s: dropping undecodable message: %s", self.name, e)
                continue
            if m.performative == "query":
                threading.Thread(target=self._serve, args=(m,), daemon=True).start()
                continue
            with self._pending_lock:
                q = self._pending.get(m.cid)
            if q is not None:
                q.put(m)
            else:
                log.debug("%s: no conversation for %s %s", self.name, m.performative, m.cid)

    def _malformed_reply(self, data: bytes) -> Message | None:
        try:
            m = decode(data, validate=False)
        except MessageError:
            return None
        if m.performative != "answer":
            return None
        return Message.error(m.cid, m.sender, m.receiver, "non_ground_answer", "remote answer is not ground")

    def _serve(self, m: Message) -> None:
        try:
            for out in self.handle_query(m):
                self._send(out)
        except ConnectionClosed:
            pass

    # -- protocol ------------------------------------------------------

    def handle_query(self, m: Message) -> Iterator[Message]:
        """Outgoing messages answering query ``m``: answers, then a terminator."""
        goal = m.content
        bad = exported_violation(goal, self.public)
        if bad is not None:
            yield m.reply("error", _err("not_exported", bad))
            return
        deadline = time.monotonic() + self.config.query_timeout_ms / 1000
        sols = solve(self.rulebase, goal, self.limits, _Remote(self, deadline))
        try:
            for answer in sols:
                if not all(is_ground(v) for v in answer.values()):
                    yield m.reply("error", _err("non_ground_answer", "answer has unbound variables"))
                    return
                yield Message.answer(m.cid, self.name, m.sender, answer)
        except RemoteError as e:
            yield m.reply("error", _err(e.code, e.detail))
            return
        except EngineError as e:
            yield m.reply("error", _err("engine_error", str(e)))
            return
        except Exception as e:  # the agent must survive any bad query
            log.exception("%s: query failed", self.name)
            yield m.reply("error", _err("engine_error", f"{type(e).__name__}: {e}"))
            return
        if sols.depth_exceeded:
            yield m.reply("error", _err("depth_limit_exceeded", f"max_depth {self.limits.max_depth}"))
            return
        yield m.reply("end_of_answers")

    def perform_ask(self, target: str, goal: Term, deadline: float) -> Iterator[dict]:
        """Stream the answers of ``target`` for ``goal`` as binding dicts."""
        if target == self.name:
            raise RemoteError("self_ask", target)
        cid = new_cid()
        q: queue.Queue = queue.Queue()
        with self._pending_lock:
            self._pending[cid] = q
        try:
            try:
                self._send(Message(cid, self.name, target, "query", goal))
            except ConnectionClosed:
                raise RemoteError("delivery_failed", "broker connection closed") from None
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise RemoteError("timeout", target)
                try:
                    reply = q.get(timeout=remaining)
                except queue.Empty:
                    raise RemoteError("timeout", target) from None
                if reply.performative == "answer":
                    yield reply.bindings
                elif reply.performative == "end_of_answers":
                    return
                elif reply.performative == "error":
                    code, detail = reply.error_code
                    raise RemoteError(code, detail)
        finally:
            with self._pending_lock:
                self._pending.pop(cid, None)

    def resolve_responsibility(self, goal: Term) -> str:
        key = indicator(goal)
        agent = self.table.get(key)
        if agent is None:
            raise NoResponsibleAgent(f"{key[0]}/{key[1]}")
        return agent


def _err(code: str, detail: str) -> Term:
    return Compound("err", (Const(code), Str(detail)))


def register(conn, name: str, timeout: float = 5.0) -> None:
    """Send ``register`` and wait for the broker's ``ack``."""
    cid = new_cid()
    try:
        conn.send(encode(Message.register(cid, name)))
        deadline = time.monotonic() + timeout
        while True:
            data = conn.recv(max(0.0, deadline - time.monotonic()))
            if data is None:
                raise BrokerUnavailable("no ack from broker")
            m = decode(data)
            if m.cid != cid:
                continue
            if m.performative == "ack":
                return
            if m.performative == "error":
                raise BrokerUnavailable("registration refused: %s %s" % m.error_code)
    except ConnectionClosed:
        raise BrokerUnavailable("broker closed the connection") from None


def connect(address: str | None = None, broker=None):
    """In-process connection when ``broker`` is given, TCP otherwise."""
    if broker is not None:
        return broker.connect_inproc()
    try:
        return TcpConnection.connect(address or DEFAULT_BROKER)
    except OSError as e:
        raise BrokerUnavailable(f"cannot connect to {address}: {e.strerror or e}") from None


def load_agent(cfg: AgentConfig, broker=None, address: str | None = None, limits: SolveLimits | None = None) -> Agent:
    """Validate ``cfg``, build the rule base, register and start serving.

    Pass an in-process ``broker`` or a TCP ``address``; without either the
    config's own ``broker`` field is used.
    """
    rb = build_rulebase(cfg)
    conn = connect(address or cfg.broker, broker)
    try:
        return Agent(cfg, rb, conn, limits).start()
    except BaseException:
        conn.close()
        raise


# --------------------------------------------------------------------------
# client


@dataclass
class QueryResult:
    answers: list[dict]
    status: str  # complete | error | timeout
    error: tuple[str, str] | None = None
    messages: list[Message] = field(default_factory=list)


class Client:
    """A registered, non-serving endpoint that issues queries."""

    def __init__(self, conn, name: str | None = None) -> None:
        self.conn = conn
        self.name = name or "client_" + new_cid()[:12]
        register(conn, self.name)

    def close(self) -> None:
        self.conn.close()

    def __enter__(self) -> "Client":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def query(
        self,
        target: str,
        query,
        timeout_ms: int = 5000,
        max_answers: int | None = None,
        cid: str | None = None,
    ) -> QueryResult:
        """Send one query and collect its conversation."""
        if isinstance(query, str):
            query = goal_term(parse_query(query))
        m = Message(cid or new_cid(), self.name, target, "query", query)
        self.conn.send(encode(m))
        result = QueryResult([], "timeout")
        deadline = time.monotonic() + timeout_ms / 1000
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return result
            try:
                data = self.conn.recv(remaining)
            except ConnectionClosed:
                result.status, result.error = "error", ("connection_closed", "")
                return result
            if data is None:
                return result
            reply = decode(data)
            if reply.cid != m.cid:
                continue
            result.messages.append(reply)
            if reply.performative == "answer":
                result.answers.append(reply.bindings)
                if max_answers is not None and len(result.answers) >= max_answers:
                    result.status = "complete"
                    return result
            elif reply.performative == "end_of_answers":
                result.status = "complete"
                return result
            elif reply.performative == "error":
                result.error = reply.error_code
                result.status = "timeout" if result.error[0] == "timeout" else "error"
                return result


# --------------------------------------------------------------------------
# single-engine view of a topology


class LocalRemote:
    """RemoteAsk that answers ask/delegate from one merged rule base."""

    def __init__(self, rulebase: RuleBase, table: dict, limits: SolveLimits | None = None) -> None:
        self.rulebase = rulebase
        self.table = table
        self.limits = limits

    def ask(self, target: str, goal: Term):
        return solve(self.rulebase, goal, self.limits, self)

    def responsible(self, goal: Term) -> str:
        key = indicator(goal)
        if key not in self.table:
            raise NoResponsibleAgent(f"{key[0]}/{key[1]}")
        return self.table[key]


def merge_agents(configs: list[AgentConfig]) -> tuple[RuleBase, LocalRemote]:
    """Union of all agents' rule bases plus a local stand-in for delegation.

    Raises ConfigError when two agents define the same predicate.
    """
    merged = RuleBase()
    owner: dict = {}
    table: dict = {}
    for cfg in configs:
        rb = build_rulebase(cfg)
        for key in rb.predicates():
            if key in owner:
                raise ConfigError("merge", f"{key[0]}/{key[1]} defined by {owner[key]} and {cfg.name}")
            owner[key] = cfg.name
        merged.extend(rb)
        table.update({(r.predicate, r.arity): r.agent for r in cfg.responsibility})
    return merged, LocalRemote(merged, table)
