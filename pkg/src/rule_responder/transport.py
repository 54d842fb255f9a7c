"""Client-side connections to the broker: TCP and in-process.

Both expose the same three calls, so agents and clients do not care which
transport carries their lines:

* ``send(data)`` -- write one encoded message line
* ``recv(timeout)`` -- next line, or ``None`` on timeout
* ``close()``
"""

from __future__ import annotations

import queue
import socket
import threading

from .messaging import MAX_MESSAGE_BYTES

_CLOSED = object()


class ConnectionClosed(Exception):
    pass


def parse_address(addr: str | tuple) -> tuple[str, int]:
    if isinstance(addr, tuple):
        return addr[0], int(addr[1])
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {addr!r}")
    return host or "127.0.0.1", int(port)


def read_lines(rfile):
    """Yield newline-terminated lines from a binary file; stop at EOF.

    Raises ValueError for a line over the message size cap.
    """
    while True:
        line = rfile.readline(MAX_MESSAGE_BYTES + 1)
        if not line:
            return
        if not line.endswith(b"\n"):
            if len(line) > MAX_MESSAGE_BYTES:
                raise ValueError("line exceeds maximum message size")
            return  # truncated at EOF
        yield line


class _Inbox:
    def __init__(self) -> None:
        self._q: queue.Queue = queue.Queue()
        self.closed = False

    def put(self, data: bytes) -> None:
        self._q.put(data)

    def shut(self) -> None:
        self.closed = True
        self._q.put(_CLOSED)

    def get(self, timeout: float | None) -> bytes | None:
        try:
            item = self._q.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is _CLOSED:
            self._q.put(_CLOSED)
            raise ConnectionClosed()
        return item


class TcpConnection:
    def __init__(self, sock: socket.socket) -> None:
        self.sock = sock
        self._wlock = threading.Lock()
        self._inbox = _Inbox()
        self._reader = threading.Thread(target=self._read, daemon=True)
        self._reader.start()

    @classmethod
    def connect(cls, address, timeout: float = 5.0) -> "TcpConnection":
        sock = socket.create_connection(parse_address(address), timeout=timeout)
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return cls(sock)

    def _read(self) -> None:
        try:
            with self.sock.makefile("rb") as rfile:
                for line in read_lines(rfile):
                    self._inbox.put(line)
        except (OSError, ValueError):
            pass
        finally:
            self._inbox.shut()

    def send(self, data: bytes) -> None:
        try:
            with self._wlock:
                self.sock.sendall(data)
        except OSError as e:
            raise ConnectionClosed(str(e)) from None

    def recv(self, timeout: float | None = None) -> bytes | None:
        return self._inbox.get(timeout)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class InProcConnection:
    """A connection whose far end is a broker in the same process."""

    def __init__(self, broker) -> None:
        self._broker = broker
        self._inbox = _Inbox()
        self.endpoint = broker._attach_inproc(self)

    def send(self, data: bytes) -> None:
        if self._inbox.closed:
            raise ConnectionClosed()
        self._broker._on_data(self.endpoint, data)

    def recv(self, timeout: float | None = None) -> bytes | None:
        return self._inbox.get(timeout)

    def close(self) -> None:
        if not self._inbox.closed:
            self._inbox.shut()
            self._broker._on_disconnect(self.endpoint)
