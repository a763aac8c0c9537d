"""MQTT 3.1.1 packet codec for the QoS 0/1, clean-session subset.

Wire layout per packet: a fixed header (packet type in the high nibble
of the first byte, flags in the low nibble), a Remaining Length encoded
as a base-128 varint (LSB first, bit 7 as continuation, at most 4
bytes), then the variable header and payload. Strings are big-endian
u16 length-prefixed UTF-8.

``decode_packet`` is incremental: it returns None when the buffer holds
only a prefix of a valid packet, so callers can keep feeding bytes.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

MAX_REMAINING_LENGTH = 268_435_455  # 128**4 - 1
PROTOCOL_NAME = "MQTT"
PROTOCOL_LEVEL = 4  # 3.1.1

CONNECT_ACCEPTED = 0
CONNECT_REFUSED_PROTOCOL = 1
CONNECT_REFUSED_IDENTIFIER = 2
CONNECT_REFUSED_UNAVAILABLE = 3


class CodecError(Exception):
    pass


class Oversize(CodecError):
    """Remaining length exceeds the 4-byte varint maximum."""


class MalformedVarint(CodecError):
    """More than 4 continuation bytes in a Remaining Length."""


class UnknownPacketType(CodecError):
    pass


class ProtocolViolation(CodecError):
    """Reserved flag bits wrong, or field outside the supported subset."""


class PacketType(enum.IntEnum):
    CONNECT = 1
    CONNACK = 2
    PUBLISH = 3
    PUBACK = 4
    SUBSCRIBE = 8
    SUBACK = 9
    PINGREQ = 12
    PINGRESP = 13
    DISCONNECT = 14


def _check_packet_id(packet_id: int) -> None:
    if not 1 <= packet_id <= 65535:
        raise ValueError(f"packet_id must be in [1, 65535], got {packet_id}")


@dataclass(frozen=True)
class Connect:
    client_id: str
    keep_alive_s: int = 60
    protocol_level: int = PROTOCOL_LEVEL


@dataclass(frozen=True)
class Connack:
    return_code: int
    session_present: bool = False


@dataclass(frozen=True)
class Publish:
    topic: str
    payload: bytes
    qos: int = 0
    packet_id: int | None = None
    dup: bool = False
    retain: bool = False

    def __post_init__(self):
        if self.qos not in (0, 1):
            raise ValueError(f"qos must be 0 or 1, got {self.qos}")
        if self.qos == 0 and self.packet_id is not None:
            raise ValueError("qos-0 publish must not carry a packet_id")
        if self.qos == 1:
            if self.packet_id is None:
                raise ValueError("qos-1 publish requires a packet_id")
            _check_packet_id(self.packet_id)
        if "+" in self.topic or "#" in self.topic:
            raise ValueError(f"publish topic must not contain wildcards: {self.topic!r}")
        if not self.topic:
            raise ValueError("publish topic must be non-empty")


@dataclass(frozen=True)
class Puback:
    packet_id: int

    def __post_init__(self):
        _check_packet_id(self.packet_id)


@dataclass(frozen=True)
class Subscribe:
    packet_id: int
    topics: tuple[tuple[str, int], ...]  # (filter, requested qos)

    def __post_init__(self):
        _check_packet_id(self.packet_id)
        if not self.topics:
            raise ValueError("subscribe requires at least one topic filter")
        for _, qos in self.topics:
            if qos not in (0, 1):
                raise ValueError(f"requested qos must be 0 or 1, got {qos}")


@dataclass(frozen=True)
class Suback:
    packet_id: int
    granted: tuple[int, ...]  # per-filter granted qos, 0x80 = failure

    def __post_init__(self):
        _check_packet_id(self.packet_id)


@dataclass(frozen=True)
class Pingreq:
    pass


@dataclass(frozen=True)
class Pingresp:
    pass


@dataclass(frozen=True)
class Disconnect:
    pass


Packet = (Connect | Connack | Publish | Puback | Subscribe | Suback
          | Pingreq | Pingresp | Disconnect)


def encode_varint(value: int) -> bytes:
    """Minimal base-128 varint with continuation bit, LSB first."""
    if value < 0 or value > MAX_REMAINING_LENGTH:
        raise Oversize(f"length {value} outside [0, {MAX_REMAINING_LENGTH}]")
    out = bytearray()
    while True:
        value, digit = divmod(value, 128)
        if value:
            out.append(digit | 0x80)
        else:
            out.append(digit)
            return bytes(out)


def decode_varint(buf: bytes, offset: int = 0) -> tuple[int, int] | None:
    """Decode a varint at ``offset``; (value, bytes consumed) or None if short."""
    value = 0
    for i in range(4):
        if offset + i >= len(buf):
            return None
        byte = buf[offset + i]
        value |= (byte & 0x7F) << (7 * i)
        if not byte & 0x80:
            return value, i + 1
    raise MalformedVarint("varint continuation past 4 bytes")


def _encode_string(text: str) -> bytes:
    data = text.encode("utf-8")
    if len(data) > 65535:
        raise ValueError("string exceeds 65535 encoded bytes")
    return struct.pack(">H", len(data)) + data


class _Reader:
    """Cursor over one packet body; raises on truncation inside the body."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise ProtocolViolation("packet body shorter than declared")
        chunk = self._data[self._pos:self._pos + n]
        self._pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def string(self) -> str:
        length = self.u16()
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolViolation(f"string is not valid UTF-8: {exc}") from exc

    def rest(self) -> bytes:
        chunk = self._data[self._pos:]
        self._pos = len(self._data)
        return chunk

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def expect_end(self) -> None:
        if self.remaining:
            raise ProtocolViolation(f"{self.remaining} unexpected trailing bytes in packet body")


def _frame(packet_type: PacketType, flags: int, body: bytes) -> bytes:
    if len(body) > MAX_REMAINING_LENGTH:
        raise Oversize(f"remaining length {len(body)} exceeds maximum")
    return bytes([(packet_type << 4) | flags]) + encode_varint(len(body)) + body


def encode_packet(packet: Packet) -> bytes:
    """Serialize a packet to its exact MQTT 3.1.1 bytes."""
    if isinstance(packet, Connect):
        flags = 0x02  # clean session; will/user/password unsupported
        body = (_encode_string(PROTOCOL_NAME)
                + bytes([packet.protocol_level, flags])
                + struct.pack(">H", packet.keep_alive_s)
                + _encode_string(packet.client_id))
        return _frame(PacketType.CONNECT, 0, body)
    if isinstance(packet, Connack):
        body = bytes([1 if packet.session_present else 0, packet.return_code])
        return _frame(PacketType.CONNACK, 0, body)
    if isinstance(packet, Publish):
        flags = (packet.dup << 3) | (packet.qos << 1) | packet.retain
        body = _encode_string(packet.topic)
        if packet.qos:
            body += struct.pack(">H", packet.packet_id)
        body += packet.payload
        return _frame(PacketType.PUBLISH, flags, body)
    if isinstance(packet, Puback):
        return _frame(PacketType.PUBACK, 0, struct.pack(">H", packet.packet_id))
    if isinstance(packet, Subscribe):
        body = struct.pack(">H", packet.packet_id)
        for topic_filter, qos in packet.topics:
            body += _encode_string(topic_filter) + bytes([qos])
        return _frame(PacketType.SUBSCRIBE, 0x2, body)
    if isinstance(packet, Suback):
        body = struct.pack(">H", packet.packet_id) + bytes(packet.granted)
        return _frame(PacketType.SUBACK, 0, body)
    if isinstance(packet, Pingreq):
        return _frame(PacketType.PINGREQ, 0, b"")
    if isinstance(packet, Pingresp):
        return _frame(PacketType.PINGRESP, 0, b"")
    if isinstance(packet, Disconnect):
        return _frame(PacketType.DISCONNECT, 0, b"")
    raise TypeError(f"not a packet: {packet!r}")


def _decode_connect(reader: _Reader) -> Connect:
    name = reader.string()
    if name != PROTOCOL_NAME:
        raise ProtocolViolation(f"unexpected protocol name {name!r}")
    level = reader.u8()
    flags = reader.u8()
    if flags & 0x01:
        raise ProtocolViolation("connect flags reserved bit set")
    if flags & ~0x02:
        raise ProtocolViolation("will/username/password flags unsupported in this subset")
    keep_alive = reader.u16()
    client_id = reader.string()
    reader.expect_end()
    return Connect(client_id, keep_alive, protocol_level=level)


def _decode_publish(reader: _Reader, flags: int) -> Publish:
    qos = (flags >> 1) & 0x3
    if qos > 1:
        raise ProtocolViolation(f"qos {qos} unsupported in this subset")
    topic = reader.string()
    packet_id = reader.u16() if qos else None
    return Publish(topic, reader.rest(), qos=qos, packet_id=packet_id,
                   dup=bool(flags & 0x8), retain=bool(flags & 0x1))


def _decode_subscribe(reader: _Reader) -> Subscribe:
    packet_id = reader.u16()
    topics = []
    while reader.remaining:
        topic_filter = reader.string()
        qos = reader.u8()
        if qos > 1:
            raise ProtocolViolation(f"requested qos {qos} unsupported in this subset")
        topics.append((topic_filter, qos))
    if not topics:
        raise ProtocolViolation("subscribe packet with no topic filters")
    return Subscribe(packet_id, tuple(topics))


_EXPECTED_FLAGS = {
    PacketType.CONNECT: 0,
    PacketType.CONNACK: 0,
    PacketType.PUBACK: 0,
    PacketType.SUBSCRIBE: 0x2,
    PacketType.SUBACK: 0,
    PacketType.PINGREQ: 0,
    PacketType.PINGRESP: 0,
    PacketType.DISCONNECT: 0,
}


def decode_packet(buf: bytes) -> tuple[Packet, int] | None:
    """Decode one packet from the head of ``buf``.

    Returns (packet, bytes consumed), or None when the buffer holds only
    a prefix of a valid packet (read more and retry). Raises CodecError
    subclasses on actual wire violations.
    """
    if not buf:
        return None
    first = buf[0]
    type_value = first >> 4
    flags = first & 0x0F
    try:
        packet_type = PacketType(type_value)
    except ValueError:
        raise UnknownPacketType(f"packet type {type_value} not supported") from None

    header = decode_varint(buf, 1)
    if header is None:
        return None
    length, varint_len = header
    start = 1 + varint_len
    if len(buf) < start + length:
        return None
    consumed = start + length
    reader = _Reader(bytes(buf[start:consumed]))

    if packet_type != PacketType.PUBLISH and flags != _EXPECTED_FLAGS[packet_type]:
        raise ProtocolViolation(
            f"{packet_type.name} fixed-header flags must be "
            f"{_EXPECTED_FLAGS[packet_type]:#x}, got {flags:#x}")

    if packet_type == PacketType.CONNECT:
        packet: Packet = _decode_connect(reader)
    elif packet_type == PacketType.CONNACK:
        session_present = reader.u8()
        if session_present > 1:
            raise ProtocolViolation("connack acknowledge flags reserved bits set")
        packet = Connack(reader.u8(), session_present=bool(session_present))
        reader.expect_end()
    elif packet_type == PacketType.PUBLISH:
        packet = _decode_publish(reader, flags)
    elif packet_type == PacketType.PUBACK:
        packet = Puback(reader.u16())
        reader.expect_end()
    elif packet_type == PacketType.SUBSCRIBE:
        packet = _decode_subscribe(reader)
    elif packet_type == PacketType.SUBACK:
        packet_id = reader.u16()
        packet = Suback(packet_id, tuple(reader.rest()))
    elif packet_type == PacketType.PINGREQ:
        reader.expect_end()
        packet = Pingreq()
    elif packet_type == PacketType.PINGRESP:
        reader.expect_end()
        packet = Pingresp()
    else:
        reader.expect_end()
        packet = Disconnect()
    return packet, consumed


class StreamDecoder:
    """Accumulates a byte stream and yields complete packets."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Packet]:
        self._buf.extend(data)
        packets = []
        while True:
            decoded = decode_packet(bytes(self._buf))
            if decoded is None:
                return packets
            packet, consumed = decoded
            del self._buf[:consumed]
            packets.append(packet)

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)
