"""TLS 1.3 record + handshake codec: ClientHello, ServerHello, Alert.

Structural only — no key schedule, no encryption.  Every length field is
a derived node recomputed on encode as the byte size of what follows it
inside its enclosing composite, which is exactly how the TLS vector
lengths nest.  Unknown extensions decode to opaque type/length/data.
"""
from __future__ import annotations

from dataclasses import replace

from ..model import Bytes, FieldNode, Message, Uint, comp, raw, uint
from .base import (
    Cursor, MalformedWire, Unencodable,
    canonical_freeze_paths, repair_tree,
)

PROTOCOL = "TLS13"

CONTENT_HANDSHAKE = 22
CONTENT_ALERT = 21
HANDSHAKE_CLIENT_HELLO = 1
HANDSHAKE_SERVER_HELLO = 2

# IANA extension-type registry subset; unknown types keep a generic name.
EXTENSION_NAMES = {
    0: "server_name",
    5: "status_request",
    10: "supported_groups",
    11: "ec_point_formats",
    13: "signature_algorithms",
    16: "application_layer_protocol_negotiation",
    18: "signed_certificate_timestamp",
    21: "padding",
    23: "extended_master_secret",
    27: "compress_certificate",
    35: "session_ticket",
    41: "pre_shared_key",
    43: "supported_versions",
    45: "psk_key_exchange_modes",
    51: "key_share",
    17513: "application_settings",
    65281: "renegotiation_info",
    65037: "encrypted_client_hello",
}
EXTENSION_TYPES = {v: k for k, v in EXTENSION_NAMES.items()}


def _decode_extension(cur: Cursor) -> FieldNode:
    ext_type = cur.u16()
    length = cur.u16()
    data = cur.take(length)
    return comp(
        "extensions",
        uint("type", ext_type),
        uint("length", length, derived=True),
        raw("data", data),
    )


def _decode_client_hello(cur: Cursor) -> FieldNode:
    children = [
        uint("legacy_version", cur.u16()),
        raw("random", cur.take(32)),
    ]
    sid_len = cur.u8()
    children += [uint("session_id_length", sid_len, bits=8, derived=True),
                 raw("session_id", cur.take(sid_len))]
    cs_len = cur.u16()
    children += [uint("cipher_suites_length", cs_len, derived=True),
                 raw("cipher_suites", cur.take(cs_len))]
    cm_len = cur.u8()
    children += [uint("compression_methods_length", cm_len, bits=8, derived=True),
                 raw("compression_methods", cur.take(cm_len))]
    ext_len = cur.u16()
    children.append(uint("extensions_length", ext_len, derived=True))
    ext_cur = Cursor(cur.take(ext_len))
    while ext_cur.remaining:
        children.append(_decode_extension(ext_cur))
    return comp("handshake", uint("handshake_type", HANDSHAKE_CLIENT_HELLO, bits=8),
                uint("length", 0, bits=24, derived=True), *children)


def _decode_server_hello(cur: Cursor) -> FieldNode:
    children = [
        uint("legacy_version", cur.u16()),
        raw("random", cur.take(32)),
    ]
    sid_len = cur.u8()
    children += [uint("session_id_length", sid_len, bits=8, derived=True),
                 raw("session_id", cur.take(sid_len)),
                 uint("cipher_suite", cur.u16()),
                 uint("compression_method", cur.u8(), bits=8)]
    ext_len = cur.u16()
    children.append(uint("extensions_length", ext_len, derived=True))
    ext_cur = Cursor(cur.take(ext_len))
    while ext_cur.remaining:
        children.append(_decode_extension(ext_cur))
    return comp("handshake", uint("handshake_type", HANDSHAKE_SERVER_HELLO, bits=8),
                uint("length", 0, bits=24, derived=True), *children)


def decode(message_type: str, data: bytes) -> Message:
    if not data:
        raise MalformedWire("empty TLS record")
    cur = Cursor(data)
    content_type = cur.u8()
    version = cur.u16()
    length = cur.u16()
    body = Cursor(cur.take(length))
    if cur.remaining:
        raise MalformedWire(f"{cur.remaining} trailing bytes after TLS record")
    head = [
        uint("content_type", content_type, bits=8),
        uint("legacy_record_version", version),
        uint("record_length", length, derived=True),
    ]
    if content_type == CONTENT_ALERT:
        payload = comp("alert", uint("level", body.u8(), bits=8),
                       uint("description", body.u8(), bits=8))
    elif content_type == CONTENT_HANDSHAKE:
        hs_type = body.u8()
        hs_len = body.u24()
        hs_body = Cursor(body.take(hs_len))
        if hs_type == HANDSHAKE_CLIENT_HELLO:
            payload = _decode_client_hello(hs_body)
        elif hs_type == HANDSHAKE_SERVER_HELLO:
            payload = _decode_server_hello(hs_body)
        else:
            raise MalformedWire(f"unsupported handshake type {hs_type}")
        # splice the real handshake length back in
        kids = list(payload.children)
        kids[1] = replace(kids[1], value=Uint(hs_len, 24))
        payload = replace(payload, value=payload.value.__class__(tuple(kids)))
        if hs_body.remaining:
            raise MalformedWire("trailing bytes inside handshake message")
    else:
        raise MalformedWire(f"unsupported content type {content_type}")
    if body.remaining:
        raise MalformedWire("trailing bytes inside TLS record")
    return Message(PROTOCOL, message_type, comp("root", *head, payload))


def extension_names(msg: Message) -> list[str]:
    """Names of the extensions in wire order (for message-type matching)."""
    out = []
    for ext in _extensions(msg):
        t = next((c.value.value for c in ext.children
                  if c.name == "type" and isinstance(c.value, Uint)), None)
        out.append(EXTENSION_NAMES.get(t, f"unknown_{t}"))
    return out


def _extensions(msg: Message) -> list[FieldNode]:
    for c in msg.root.children:
        if c.name == "handshake":
            return [k for k in c.children if k.name == "extensions"]
    return []


def candidate_types(msg: Message) -> list[str]:
    """Message-type labels this record can stand in for, best first."""
    for c in msg.root.children:
        if c.name == "alert":
            return ["Alert"]
        if c.name == "handshake":
            hs = next((k.value.value for k in c.children
                       if k.name == "handshake_type"), None)
            if hs == HANDSHAKE_SERVER_HELLO:
                return ["ServerHello"]
            if hs == HANDSHAKE_CLIENT_HELLO:
                names = extension_names(msg)
                if not names:
                    return ["ClientHello with No Extension"]
                return [f"ClientHello with {n.replace('_', ' ').title()} Extension"
                        for n in names]
    return []


def _encode_node(node: FieldNode, path: str) -> bytes:
    v = node.value
    if isinstance(v, Uint):
        return v.value.to_bytes(v.bits // 8, "big")
    if isinstance(v, Bytes):
        return v.data
    if node.is_composite:
        return b"".join(_encode_node(c, f"{path}.{c.name}") for c in node.children)
    raise Unencodable(path, f"unsupported value {v!r} in TLS tree")


def repair_derived(msg: Message, freeze=()) -> Message:
    frozen = canonical_freeze_paths(msg, freeze)

    def size(nodes):
        return sum(len(_encode_node(n, "")) for n in nodes)

    def recompute(parent: FieldNode, siblings, pos, path):
        node = siblings[pos]
        if not isinstance(node.value, Uint):
            return None
        name = node.name
        if name in ("record_length", "length"):
            # record and handshake headers: length of everything that follows
            return Uint(size(siblings[pos + 1:]), node.value.bits)
        if name == "extensions_length":
            return Uint(size([s for s in siblings if s.name == "extensions"]),
                        node.value.bits)
        if name.endswith("_length"):
            base = name[:-len("_length")]
            target = next((s for s in siblings[pos + 1:] if s.name == base), None)
            if target is None:
                return None
            return Uint(size([target]), node.value.bits)
        return None

    return replace(msg, root=repair_tree(msg.root, frozen, recompute))


def encode(msg: Message, freeze=()) -> bytes:
    repaired = repair_derived(msg, freeze=freeze)
    return b"".join(_encode_node(c, c.name) for c in repaired.root.children)


def alert_bytes(level: int = 2, description: int = 47) -> bytes:
    return bytes([CONTENT_ALERT, 3, 3, 0, 2, level, description])
