"""In-process MQTT 3.1.1 broker: QoS 0/1, clean sessions, no retained state.

One reader thread per connection; the subscription table is mutated
under a single lock and routing works from consistent snapshots. QoS-1
deliveries are kept pending until the subscriber acks and are
retransmitted with the dup flag after each retry interval. Writes to a
connection are serialized, so per-connection delivery order follows
publish order.
"""

from __future__ import annotations

import logging
import socket
import threading
import time

from . import topics
from .packets import (CONNECT_ACCEPTED, CONNECT_REFUSED_PROTOCOL, PROTOCOL_LEVEL,
                      CodecError, Connack, Connect, Disconnect, Packet, Pingreq,
                      Pingresp, Puback, Publish, StreamDecoder, Subscribe, Suback,
                      encode_packet)
from .transport import TransportClosed

log = logging.getLogger(__name__)

SUBACK_FAILURE = 0x80


class _Pending:
    """A QoS-1 delivery awaiting PUBACK from its subscriber."""

    __slots__ = ("publish", "deadline")

    def __init__(self, publish: Publish, deadline: float):
        self.publish = publish
        self.deadline = deadline


class _Session:
    def __init__(self, client_id: str, conn):
        self.client_id = client_id
        self.conn = conn
        self.subscriptions: list[tuple[str, int]] = []
        self.pending: dict[int, _Pending] = {}
        self.write_lock = threading.Lock()
        self._next_packet_id = 0

    def allocate_packet_id(self) -> int:
        for _ in range(65535):
            self._next_packet_id = self._next_packet_id % 65535 + 1
            if self._next_packet_id not in self.pending:
                return self._next_packet_id
        raise RuntimeError("no free packet ids (65535 deliveries in flight)")

    def send(self, packet: Packet) -> None:
        data = encode_packet(packet)
        with self.write_lock:
            self.conn.sendall(data)


class _Drop(Exception):
    """Internal: close this connection."""


class Broker:
    """Message hub for the telemetry pipeline.

    Serve in-memory connections with :meth:`attach` (tests, single-process
    demo) or TCP with :meth:`listen`. ``retry_interval`` controls QoS-1
    retransmission.
    """

    def __init__(self, retry_interval: float = 5.0):
        self.retry_interval = retry_interval
        self._lock = threading.Lock()
        self._sessions: dict[str, _Session] = {}
        self._conns: set = set()
        self._stopping = threading.Event()
        self._threads: list[threading.Thread] = []
        self._listener: socket.socket | None = None
        tick = max(0.01, min(retry_interval / 4, 0.25))
        self._retry_thread = threading.Thread(
            target=self._retry_loop, args=(tick,), daemon=True, name="mqtt-broker-retry")
        self._retry_thread.start()

    # -- connection intake ---------------------------------------------------

    def attach(self, conn) -> threading.Thread:
        """Serve one already-connected transport (e.g. a memory pipe end)."""
        with self._lock:
            self._conns.add(conn)
        thread = threading.Thread(target=self._serve, args=(conn,),
                                  daemon=True, name="mqtt-broker-conn")
        thread.start()
        self._threads.append(thread)
        return thread

    def listen(self, host: str = "127.0.0.1", port: int = 1883) -> tuple[str, int]:
        """Bind a TCP listener; returns the actual (host, port)."""
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((host, port))
        listener.listen()
        self._listener = listener
        thread = threading.Thread(target=self._accept_loop, args=(listener,),
                                  daemon=True, name="mqtt-broker-accept")
        thread.start()
        self._threads.append(thread)
        return listener.getsockname()

    def _accept_loop(self, listener: socket.socket) -> None:
        while not self._stopping.is_set():
            try:
                conn, _addr = listener.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self.attach(conn)

    def stop(self) -> None:
        """Close every connection and stop serving."""
        self._stopping.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._lock:
            conns = list(self._conns)
            self._sessions.clear()
            self._conns.clear()
        for conn in conns:
            _close_quietly(conn)
        for thread in self._threads:
            thread.join(timeout=2)

    # -- per-connection protocol loop ----------------------------------------

    def _serve(self, conn) -> None:
        decoder = StreamDecoder()
        session: _Session | None = None
        try:
            while not self._stopping.is_set():
                try:
                    data = conn.recv(4096)
                except (TransportClosed, OSError):
                    break
                if not data:
                    break
                try:
                    packets = decoder.feed(data)
                except CodecError as exc:
                    log.warning("protocol error from %s: %s",
                                session.client_id if session else "<preconnect>", exc)
                    break
                for packet in packets:
                    session = self._handle(conn, session, packet)
        except _Drop:
            pass
        finally:
            _close_quietly(conn)
            with self._lock:
                self._conns.discard(conn)
                if session is not None and self._sessions.get(session.client_id) is session:
                    del self._sessions[session.client_id]

    def _handle(self, conn, session: _Session | None, packet: Packet) -> _Session | None:
        if session is None:
            if not isinstance(packet, Connect):
                log.warning("first packet was %s, expected CONNECT", type(packet).__name__)
                raise _Drop
            return self._connect(conn, packet)
        if isinstance(packet, Connect):
            raise _Drop  # duplicate CONNECT on a live session
        if isinstance(packet, Subscribe):
            self._subscribe(session, packet)
        elif isinstance(packet, Publish):
            self._publish(session, packet)
        elif isinstance(packet, Puback):
            with self._lock:
                session.pending.pop(packet.packet_id, None)
        elif isinstance(packet, Pingreq):
            session.send(Pingresp())
        elif isinstance(packet, Disconnect):
            raise _Drop
        return session

    def _connect(self, conn, packet: Connect) -> _Session:
        if packet.protocol_level != PROTOCOL_LEVEL:
            _send_quietly(conn, Connack(CONNECT_REFUSED_PROTOCOL))
            raise _Drop
        session = _Session(packet.client_id, conn)
        with self._lock:
            old = self._sessions.get(packet.client_id)
            self._sessions[packet.client_id] = session
        if old is not None:
            log.info("session takeover for client %r", packet.client_id)
            _close_quietly(old.conn)
        session.send(Connack(CONNECT_ACCEPTED))
        return session

    def _subscribe(self, session: _Session, packet: Subscribe) -> None:
        granted = []
        with self._lock:
            for topic_filter, qos in packet.topics:
                try:
                    topics.validate_filter(topic_filter)
                except topics.InvalidFilter:
                    granted.append(SUBACK_FAILURE)
                    continue
                session.subscriptions = [
                    s for s in session.subscriptions if s[0] != topic_filter]
                session.subscriptions.append((topic_filter, qos))
                granted.append(qos)
        session.send(Suback(packet.packet_id, tuple(granted)))

    def _publish(self, session: _Session, packet: Publish) -> None:
        try:
            topics.validate_topic(packet.topic)
        except topics.InvalidTopic:
            raise _Drop from None
        self._route(packet)
        if packet.qos == 1:
            session.send(Puback(packet.packet_id))

    def _route(self, packet: Publish) -> None:
        """Deliver once per matching subscription per session."""
        with self._lock:
            sessions = list(self._sessions.values())
        for target in sessions:
            with self._lock:
                matching = [qos for topic_filter, qos in target.subscriptions
                            if topics.topic_matches(topic_filter, packet.topic)]
            for sub_qos in matching:
                qos = min(packet.qos, sub_qos)
                if qos == 0:
                    out = Publish(packet.topic, packet.payload, qos=0)
                else:
                    with self._lock:
                        packet_id = target.allocate_packet_id()
                        out = Publish(packet.topic, packet.payload, qos=1,
                                      packet_id=packet_id)
                        target.pending[packet_id] = _Pending(
                            out, time.monotonic() + self.retry_interval)
                try:
                    target.send(out)
                except (TransportClosed, OSError):
                    pass  # reader thread will reap the session

    def _retry_loop(self, tick: float) -> None:
        while not self._stopping.wait(tick):
            now = time.monotonic()
            with self._lock:
                due = [(session, pending)
                       for session in self._sessions.values()
                       for pending in session.pending.values()
                       if pending.deadline <= now]
                for _, pending in due:
                    pending.deadline = now + self.retry_interval
            for session, pending in due:
                retransmit = Publish(pending.publish.topic, pending.publish.payload,
                                     qos=1, packet_id=pending.publish.packet_id, dup=True)
                try:
                    session.send(retransmit)
                except (TransportClosed, OSError):
                    pass


def _close_quietly(conn) -> None:
    try:
        conn.close()
    except OSError:
        pass


def _send_quietly(conn, packet: Packet) -> None:
    try:
        conn.sendall(encode_packet(packet))
    except (TransportClosed, OSError):
        pass
