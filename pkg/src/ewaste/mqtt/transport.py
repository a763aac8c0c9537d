"""Byte-stream transports: TCP sockets plus an in-memory duplex pipe.

Broker and client only require the socket subset ``sendall`` / ``recv``
/ ``close``, so tests can swap in :func:`memory_pipe` endpoints (or
wrappers that drop or mangle packets) without touching the network.
"""

from __future__ import annotations

import threading
from collections import deque


class TransportClosed(Exception):
    pass


class _Mailbox:
    """One direction of a pipe: a byte queue with blocking reads."""

    def __init__(self):
        self._chunks: deque[bytes] = deque()
        self._closed = False
        self._cond = threading.Condition()

    def put(self, data: bytes) -> None:
        with self._cond:
            if self._closed:
                raise TransportClosed("peer endpoint is closed")
            if data:
                self._chunks.append(bytes(data))
                self._cond.notify_all()

    def get(self, max_bytes: int, timeout: float | None) -> bytes:
        with self._cond:
            if not self._cond.wait_for(lambda: self._chunks or self._closed, timeout):
                raise TimeoutError("recv timed out")
            if not self._chunks:
                return b""  # closed and drained: EOF
            chunk = self._chunks.popleft()
            if len(chunk) > max_bytes:
                chunk, rest = chunk[:max_bytes], chunk[max_bytes:]
                self._chunks.appendleft(rest)
            return chunk

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


class MemoryEndpoint:
    """Socket-like endpoint of an in-process duplex pipe."""

    def __init__(self, inbox: _Mailbox, outbox: _Mailbox):
        self._inbox = inbox
        self._outbox = outbox
        self._timeout: float | None = None

    def settimeout(self, timeout: float | None) -> None:
        self._timeout = timeout

    def sendall(self, data: bytes) -> None:
        self._outbox.put(data)

    def recv(self, max_bytes: int) -> bytes:
        return self._inbox.get(max_bytes, self._timeout)

    def close(self) -> None:
        # Closing stops both directions, like a socket close.
        self._inbox.close()
        self._outbox.close()


def memory_pipe() -> tuple[MemoryEndpoint, MemoryEndpoint]:
    """A connected pair of in-memory endpoints."""
    a_to_b = _Mailbox()
    b_to_a = _Mailbox()
    return MemoryEndpoint(b_to_a, a_to_b), MemoryEndpoint(a_to_b, b_to_a)
