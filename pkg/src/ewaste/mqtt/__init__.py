"""Minimal MQTT 3.1.1 stack: codec, topic matching, broker, and client."""

from .broker import Broker
from .client import Client, ConnectionRefused, ReceivedMessage, Timeout
from .packets import (Connack, Connect, Disconnect, MalformedVarint, Oversize,
                      Packet, Pingreq, Pingresp, ProtocolViolation, Puback,
                      Publish, StreamDecoder, Suback, Subscribe,
                      UnknownPacketType, decode_packet, decode_varint,
                      encode_packet, encode_varint)
from .topics import InvalidFilter, InvalidTopic, topic_matches, validate_filter, validate_topic
from .transport import MemoryEndpoint, TransportClosed, memory_pipe

__all__ = [
    "Broker", "Client", "ConnectionRefused", "ReceivedMessage", "Timeout",
    "Connack", "Connect", "Disconnect", "MalformedVarint", "Oversize", "Packet",
    "Pingreq", "Pingresp", "ProtocolViolation", "Puback", "Publish",
    "StreamDecoder", "Suback", "Subscribe", "UnknownPacketType",
    "decode_packet", "decode_varint", "encode_packet", "encode_varint",
    "InvalidFilter", "InvalidTopic", "topic_matches", "validate_filter",
    "validate_topic", "MemoryEndpoint", "TransportClosed", "memory_pipe",
]
