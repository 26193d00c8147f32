"""Wire codecs: bit-exact decode/encode between bytes and field trees.

Each protocol module exposes:
    decode(message_type, data) -> Message
    encode(msg, freeze=())    -> bytes   (derived fields repaired first)
    repair_derived(msg, freeze=()) -> Message

``freeze`` is a collection of field paths whose derived values must be
left as-is, so a test case can deliberately carry a corrupt length.
"""
from __future__ import annotations

from .base import CodecError, MalformedWire, NoRuleForDerivedField, Unencodable
from . import dns, http1, tls13

_CODECS = {"DNS": dns, "HTTP1": http1, "TLS13": tls13}


def get_codec(protocol: str):
    try:
        return _CODECS[protocol]
    except KeyError:
        raise CodecError(f"no codec for protocol {protocol!r}") from None


def decode(protocol: str, message_type: str, data: bytes):
    return get_codec(protocol).decode(message_type, data)


def encode(msg, freeze=()):
    return get_codec(msg.protocol).encode(msg, freeze=freeze)


def repair_derived(msg, freeze=()):
    return get_codec(msg.protocol).repair_derived(msg, freeze=freeze)


__all__ = [
    "CodecError", "MalformedWire", "Unencodable", "NoRuleForDerivedField",
    "get_codec", "decode", "encode", "repair_derived", "dns", "http1", "tls13",
]
