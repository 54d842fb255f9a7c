"""Star-topology message broker.

Every agent connects to the broker, registers under a name, and from then on
sends each message to the broker, which forwards the raw bytes unchanged to
the endpoint registered under the receiver's name.  The broker also tracks
query conversations and enforces their deadlines.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass

from .messaging import (
    Conversation,
    Message,
    MessageError,
    decode,
    encode,
)
from .transport import InProcConnection, parse_address, read_lines

log = logging.getLogger(__name__)

BROKER_NAME = "broker"
_CLOSED_CIDS_KEPT = 10_000


class BrokerError(Exception):
    pass


class AddressInUse(BrokerError):
    pass


@dataclass(frozen=True)
class BrokerConfig:
    listen: str | None = "127.0.0.1:0"
    timeout_ms: int = 5000
    max_conversations: int = 1024

    def __post_init__(self) -> None:
        if self.timeout_ms < 1:
            raise ValueError("timeout_ms must be >= 1")
        if self.max_conversations < 1:
            raise ValueError("max_conversations must be >= 1")


class DeliveryFailed(Exception):
    pass


class _Endpoint:
    kind = "?"

    def __init__(self) -> None:
        self.name: str | None = None
        self.alive = True

    def deliver(self, data: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        self.alive = False


class _InProcEndpoint(_Endpoint):
    kind = "inproc"

    def __init__(self, conn: InProcConnection) -> None:
        super().__init__()
        self.conn = conn

    def deliver(self, data: bytes) -> None:
        inbox = self.conn._inbox
        if not self.alive or inbox.closed:
            raise DeliveryFailed()
        inbox.put(data)

    def close(self) -> None:
        if self.alive:
            self.alive = False
            self.conn._inbox.shut()


class _TcpEndpoint(_Endpoint):
    kind = "tcp"

    def __init__(self, sock: socket.socket, peer) -> None:
        super().__init__()
        self.sock = sock
        self.peer = peer
        self._wlock = threading.Lock()

    def deliver(self, data: bytes) -> None:
        if not self.alive:
            raise DeliveryFailed()
        try:
            with self._wlock:
                self.sock.sendall(data)
        except OSError as e:
            raise DeliveryFailed(str(e)) from None

    def close(self) -> None:
        if self.alive:
            self.alive = False
            try:
                self.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self.sock.close()


class Broker:
    """Name-based router.  Use :func:`start` to build a running one."""

    def __init__(self, config: BrokerConfig | None = None, trace_file=None) -> None:
        self.config = config or BrokerConfig()
        self._lock = threading.Lock()
        self._registry: dict[str, _Endpoint] = {}
        self._dead: set[str] = set()
        self._convs: dict[str, Conversation] = {}
        self._closed: OrderedDict[str, None] = OrderedDict()
        self._trace = trace_file
        self._trace_lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._server: socket.socket | None = None
        self.address: tuple[str, int] | None = None

    # -- lifecycle -----------------------------------------------------

    def start(self) -> "Broker":
        if self.config.listen is not None:
            host, port = parse_address(self.config.listen)
            srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            try:
                srv.bind((host, port))
            except OSError as e:
                srv.close()
                if e.errno == 98 or "in use" in str(e).lower():
                    raise AddressInUse(f"address in use: {host}:{port}") from None
                raise BrokerError(f"cannot bind {host}:{port}: {e}") from None
            srv.listen(128)
            self._server = srv
            self.address = srv.getsockname()[:2]
            self._spawn(self._accept_loop, "broker-accept")
        self._spawn(self._expiry_loop, "broker-expiry")
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._server is not None:
            try:
                self._server.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._server.close()
        with self._lock:
            eps = list(self._registry.values())
            self._registry.clear()
        for ep in eps:
            ep.close()
        for t in self._threads:
            t.join(timeout=1.0)

    def __enter__(self) -> "Broker":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def _spawn(self, fn, name, *args) -> None:
        t = threading.Thread(target=fn, args=args, name=name, daemon=True)
        t.start()
        self._threads.append(t)

    @property
    def address_text(self) -> str:
        host, port = self.address
        return f"{host}:{port}"

    def registered(self) -> list[str]:
        with self._lock:
            return sorted(self._registry)

    def open_conversations(self) -> list[str]:
        with self._lock:
            return list(self._convs)

    # -- transports ----------------------------------------------------

    def connect_inproc(self) -> InProcConnection:
        """A new in-process connection (the caller still has to register)."""
        return InProcConnection(self)

    def _attach_inproc(self, conn: InProcConnection) -> _Endpoint:
        return _InProcEndpoint(conn)

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, peer = self._server.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._spawn(self._serve_tcp, f"broker-conn-{peer[1]}", _TcpEndpoint(sock, peer))

    def _serve_tcp(self, ep: _TcpEndpoint) -> None:
        try:
            with ep.sock.makefile("rb") as rfile:
                for line in read_lines(rfile):
                    if not ep.alive:
                        break
                    self._on_data(ep, line)
        except ValueError:
            self._notify(ep, "oversize", "message_too_large", "line exceeds 1 MiB")
        except OSError:
            pass
        finally:
            self._on_disconnect(ep)

    # -- tracing -------------------------------------------------------

    def _record(self, direction: str, data: bytes) -> None:
        if self._trace is None:
            return
        with self._trace_lock:
            self._trace.write(b"%.6f\t%s\t" % (time.monotonic(), direction.encode()) + data)
            self._trace.flush()

    # -- message handling ----------------------------------------------

    def _send(self, ep: _Endpoint, m: Message) -> bool:
        data = encode(m)
        try:
            ep.deliver(data)
        except DeliveryFailed:
            return False
        self._record("out", data)
        return True

    def _notify(self, ep: _Endpoint, cid: str, code: str, detail: str, receiver: str = "") -> None:
        receiver = ep.name or receiver or "unknown"
        self._send(ep, Message.error(cid, BROKER_NAME, receiver, code, detail))

    def _on_data(self, ep: _Endpoint, data: bytes) -> None:
        if ep.name is None:
            self._handshake(ep, data)
        else:
            self.route(ep, data)

    def _handshake(self, ep: _Endpoint, data: bytes) -> None:
        try:
            m = decode(data)
        except MessageError as e:
            self._notify(ep, "handshake", "bad_handshake", str(e))
            ep.close()
            return
        self._record("in", data)
        name = m.sender
        if (
            m.performative != "register"
            or m.content.args[0].name != name
            or name == BROKER_NAME
        ):
            self._notify(
                ep, m.cid, "bad_handshake", "first message must be register(agent(Sender))", name
            )
            ep.close()
            return
        with self._lock:
            old = self._registry.get(name)
            ep.name = name
            self._registry[name] = ep
            self._dead.discard(name)
            orphaned = self._drop_conversations(name) if old is not None else []
        if old is not None:
            old.close()
            log.info("re-registered %s, old endpoint closed", name)
        else:
            log.info("registered %s (%s)", name, ep.kind)
        self._send_orphan_errors(orphaned, name)
        self._send(ep, Message(m.cid, BROKER_NAME, name, "ack"))

    def _drop_conversations(self, name: str) -> list[tuple[str, str]]:
        """Close conversations touching ``name``; caller holds the lock.

        Returns ``(cid, initiator)`` pairs whose initiator should be told.
        """
        out = []
        for cid, conv in list(self._convs.items()):
            if conv.target == name or conv.initiator == name:
                self._close(cid)
                if conv.target == name and conv.initiator != name:
                    out.append((cid, conv.initiator))
        return out

    def _send_orphan_errors(self, orphaned, name: str) -> None:
        for cid, initiator in orphaned:
            with self._lock:
                ep = self._registry.get(initiator)
            if ep is not None:
                self._notify(ep, cid, "delivery_failed", name)

    def _close(self, cid: str) -> None:
        conv = self._convs.pop(cid, None)
        if conv is not None:
            conv.close()
        self._closed[cid] = None
        if len(self._closed) > _CLOSED_CIDS_KEPT:
            self._closed.popitem(last=False)

    def _on_disconnect(self, ep: _Endpoint) -> None:
        name = ep.name
        ep.close()
        if name is None:
            return
        with self._lock:
            if self._registry.get(name) is not ep:
                return
            del self._registry[name]
            self._dead.add(name)
            orphaned = self._drop_conversations(name)
        log.info("endpoint %s disconnected", name)
        self._send_orphan_errors(orphaned, name)

    def route(self, ep: _Endpoint, data: bytes) -> str:
        """Forward one raw line from a registered endpoint.

        Returns the delivery outcome: ``delivered``, ``dropped``,
        ``rejected``, ``unknown_receiver`` or ``delivery_failed``.
        """
        try:
            m = decode(data)
        except MessageError as e:
            self._notify(ep, "invalid", "bad_message", str(e))
            return "rejected"
        self._record("in", data)
        if m.sender != ep.name or m.performative in ("register", "ack"):
            self._notify(ep, m.cid, "bad_message", "sender mismatch or unexpected performative")
            return "rejected"
        cid = m.cid
        with self._lock:
            if m.performative == "query":
                if cid in self._convs or cid in self._closed:
                    rejected = "duplicate_cid"
                elif len(self._convs) >= self.config.max_conversations:
                    rejected = "too_many_conversations"
                else:
                    rejected = None
                    deadline = time.monotonic() + self.config.timeout_ms / 1000.0
                    self._convs[cid] = Conversation(cid, m.sender, m.receiver, deadline)
            else:
                rejected = None
                if cid in self._closed:
                    return "dropped"
                conv = self._convs.get(cid)
                if (
                    conv is not None
                    and m.performative in ("end_of_answers", "error")
                    and m.sender == conv.target
                ):
                    self._close(cid)
            target = self._registry.get(m.receiver)
            if target is None:
                failure = "delivery_failed" if m.receiver in self._dead else "unknown_receiver"
                if m.performative == "query" and rejected is None:
                    self._close(cid)
        if rejected is not None:
            self._notify(ep, cid, rejected, cid)
            return "rejected"
        if target is None:
            self._notify(ep, cid, failure, m.receiver)
            return failure
        try:
            target.deliver(data)
        except DeliveryFailed:
            with self._lock:
                if self._registry.get(m.receiver) is target:
                    del self._registry[m.receiver]
                    self._dead.add(m.receiver)
                orphaned = [
                    (c, i) for c, i in self._drop_conversations(m.receiver) if c != cid
                ]
                self._close(cid)
            target.close()
            self._notify(ep, cid, "delivery_failed", m.receiver)
            self._send_orphan_errors(orphaned, m.receiver)
            return "delivery_failed"
        self._record("out", data)
        return "delivered"

    # -- deadlines -----------------------------------------------------

    def expire_conversations(self, now: float | None = None) -> list[str]:
        """Close every open conversation whose deadline passed before ``now``."""
        if now is None:
            now = time.monotonic()
        with self._lock:
            expired = [c for c in self._convs.values() if c.deadline < now]
            for conv in expired:
                self._close(conv.cid)
            targets = [(c, self._registry.get(c.initiator)) for c in expired]
        for conv, ep in targets:
            if ep is not None:
                self._notify(ep, conv.cid, "timeout", conv.cid)
        return [c.cid for c in expired]

    def _expiry_loop(self) -> None:
        while not self._stop.wait(0.01):
            self.expire_conversations()


def start(config: BrokerConfig | None = None, trace_file=None) -> Broker:
    """Bind, spawn the accept and expiry threads, and return the broker."""
    return Broker(config, trace_file).start()
