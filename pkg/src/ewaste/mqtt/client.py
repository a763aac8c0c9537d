"""MQTT client for stations and services: QoS 0/1, clean session.

A background reader thread feeds incoming publishes into ``messages``
(a queue the owner drains) and resolves handshake/ack waits. QoS-1
publishes are kept until PUBACK and retransmitted with dup=1 after each
retry interval; a pinger thread keeps the connection alive when idle.
One client per station or service; drive it from a single thread.
"""

from __future__ import annotations

import queue
import socket
import threading
import time
from dataclasses import dataclass

from .packets import (CONNECT_ACCEPTED, CodecError, Connack, Connect, Disconnect,
                      Pingreq, Pingresp, Puback, Publish, StreamDecoder, Suback,
                      Subscribe, encode_packet)
from .transport import TransportClosed


class ClientError(Exception):
    pass


class ConnectionRefused(ClientError):
    """Broker answered CONNECT with a nonzero return code."""


class Timeout(ClientError):
    """An expected acknowledgment did not arrive in time."""


class NotConnected(ClientError):
    pass


@dataclass(frozen=True)
class ReceivedMessage:
    topic: str
    payload: bytes
    qos: int
    dup: bool


class _AckWaiter:
    __slots__ = ("event", "result")

    def __init__(self):
        self.event = threading.Event()
        self.result = None


class Client:
    def __init__(self, client_id: str, keep_alive: float = 60.0,
                 retry_interval: float = 5.0, response_timeout: float = 10.0):
        self.client_id = client_id
        self.keep_alive = keep_alive
        self.retry_interval = retry_interval
        self.response_timeout = response_timeout
        self.messages: queue.Queue[ReceivedMessage] = queue.Queue()
        self._conn = None
        self._lock = threading.Lock()
        self._write_lock = threading.Lock()
        self._closed = threading.Event()
        self._connack: _AckWaiter | None = None
        self._ack_waiters: dict[int, _AckWaiter] = {}
        self._unacked: dict[int, tuple[Publish, float]] = {}  # pid -> (publish, deadline)
        self._next_packet_id = 0
        self._last_send = time.monotonic()
        self._threads: list[threading.Thread] = []

    # -- lifecycle -------------------------------------------------------------

    def connect(self, conn) -> None:
        """Handshake over an already-open transport."""
        self._conn = conn
        self._closed.clear()
        self._connack = _AckWaiter()
        for target, name in ((self._read_loop, "reader"), (self._retry_loop, "retry"),
                             (self._ping_loop, "pinger")):
            thread = threading.Thread(target=target, daemon=True,
                                      name=f"mqtt-client-{self.client_id}-{name}")
            thread.start()
            self._threads.append(thread)
        wire_keep_alive = max(1, round(self.keep_alive))
        self._send(Connect(self.client_id, wire_keep_alive))
        if not self._connack.event.wait(self.response_timeout):
            self.close()
            raise Timeout("no CONNACK from broker")
        ack: Connack = self._connack.result
        if ack.return_code != CONNECT_ACCEPTED:
            self.close()
            raise ConnectionRefused(f"broker refused connection, code {ack.return_code}")

    def connect_tcp(self, host: str, port: int) -> None:
        sock = socket.create_connection((host, port), timeout=self.response_timeout)
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.connect(sock)

    def disconnect(self) -> None:
        if self._conn is not None and not self._closed.is_set():
            try:
                self._send(Disconnect())
            except (TransportClosed, OSError, NotConnected):
                pass
        self.close()

    def close(self) -> None:
        self._closed.set()
        if self._conn is not None:
            try:
                self._conn.close()
            except OSError:
                pass

    # -- operations --------------------------------------------------------------

    def subscribe(self, topic_filter: str, qos: int = 1) -> int:
        """Subscribe and block for the SUBACK; returns the granted qos."""
        waiter = _AckWaiter()
        with self._lock:
            packet_id = self._allocate_packet_id()
            self._ack_waiters[packet_id] = waiter
        self._send(Subscribe(packet_id, ((topic_filter, qos),)))
        if not waiter.event.wait(self.response_timeout):
            raise Timeout(f"no SUBACK for {topic_filter!r}")
        granted: Suback = waiter.result
        return granted.granted[0]

    def publish(self, topic: str, payload: bytes, qos: int = 0,
                wait: bool = True) -> None:
        """Publish a message.

        QoS 0 is fire-and-forget. QoS 1 registers the message for
        retransmission until PUBACK; with wait=True the call blocks until
        the broker acks (Timeout after response_timeout).
        """
        if qos == 0:
            self._send(Publish(topic, payload, qos=0))
            return
        waiter = _AckWaiter()
        with self._lock:
            packet_id = self._allocate_packet_id()
            packet = Publish(topic, payload, qos=1, packet_id=packet_id)
            self._unacked[packet_id] = (packet, time.monotonic() + self.retry_interval)
            self._ack_waiters[packet_id] = waiter
        self._send(packet)
        if wait and not waiter.event.wait(self.response_timeout):
            raise Timeout(f"no PUBACK for packet {packet_id}")

    def flush(self, timeout: float | None = None) -> None:
        """Block until every QoS-1 publish has been acked."""
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            with self._lock:
                if not self._unacked:
                    return
            if deadline is not None and time.monotonic() > deadline:
                raise Timeout(f"{len(self._unacked)} publishes still unacked")
            time.sleep(0.005)

    # -- internals ----------------------------------------------------------------

    def _allocate_packet_id(self) -> int:
        for _ in range(65535):
            self._next_packet_id = self._next_packet_id % 65535 + 1
            if (self._next_packet_id not in self._unacked
                    and self._next_packet_id not in self._ack_waiters):
                return self._next_packet_id
        raise RuntimeError("no free packet ids")

    def _send(self, packet) -> None:
        if self._conn is None:
            raise NotConnected("client is not connected")
        data = encode_packet(packet)
        with self._write_lock:
            self._conn.sendall(data)
            self._last_send = time.monotonic()

    def _read_loop(self) -> None:
        decoder = StreamDecoder()
        while not self._closed.is_set():
            try:
                data = self._conn.recv(4096)
            except (TransportClosed, OSError):
                break
            if not data:
                break
            try:
                packets = decoder.feed(data)
            except CodecError:
                break
            for packet in packets:
                self._dispatch(packet)
        self._closed.set()

    def _dispatch(self, packet) -> None:
        if isinstance(packet, Connack):
            if self._connack is not None:
                self._connack.result = packet
                self._connack.event.set()
        elif isinstance(packet, Publish):
            self.messages.put(ReceivedMessage(packet.topic, packet.payload,
                                              packet.qos, packet.dup))
            if packet.qos == 1:
                try:
                    self._send(Puback(packet.packet_id))
                except (TransportClosed, OSError, NotConnected):
                    pass
        elif isinstance(packet, (Puback, Suback)):
            with self._lock:
                if isinstance(packet, Puback):
                    self._unacked.pop(packet.packet_id, None)
                waiter = self._ack_waiters.pop(packet.packet_id, None)
            if waiter is not None:
                waiter.result = packet
                waiter.event.set()
        elif isinstance(packet, Pingresp):
            pass

    def _retry_loop(self) -> None:
        tick = max(0.01, min(self.retry_interval / 4, 0.25))
        while not self._closed.wait(tick):
            now = time.monotonic()
            due = []
            with self._lock:
                for packet_id, (packet, deadline) in list(self._unacked.items()):
                    if deadline <= now:
                        self._unacked[packet_id] = (packet, now + self.retry_interval)
                        due.append(packet)
            for packet in due:
                retransmit = Publish(packet.topic, packet.payload, qos=1,
                                     packet_id=packet.packet_id, dup=True)
                try:
                    self._send(retransmit)
                except (TransportClosed, OSError, NotConnected):
                    return

    def _ping_loop(self) -> None:
        tick = max(0.01, min(self.keep_alive / 4, 1.0))
        while not self._closed.wait(tick):
            if time.monotonic() - self._last_send > self.keep_alive:
                try:
                    self._send(Pingreq())
                except (TransportClosed, OSError, NotConnected):
                    return
