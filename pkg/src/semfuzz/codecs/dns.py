"""DNS message codec (queries and responses, standard binary layout).

Names are stored as dotted text exactly as spelled on the wire (case
preserved).  Decoding follows compression pointers; encoding always
writes uncompressed names, so byte round-trips hold for uncompressed
captures only.  Section counts and rdlength are derived fields.
"""
from __future__ import annotations

from dataclasses import replace

from ..model import (
    Bytes, Composite, FieldNode, Message, Text, Uint,
    comp, raw, text, uint,
)
from .base import (
    Cursor, MalformedWire, Unencodable,
    canonical_freeze_paths, repair_tree,
)

PROTOCOL = "DNS"

_SECTIONS = ("answer", "authority", "additional")


def _decode_name(cur: Cursor, data: bytes) -> str:
    labels = []
    jumps = 0
    pos = cur.pos
    end = None  # position after the name in the main stream
    while True:
        if pos >= len(data):
            raise MalformedWire("truncated name")
        length = data[pos]
        if length & 0xC0 == 0xC0:
            if pos + 1 >= len(data):
                raise MalformedWire("truncated compression pointer")
            if end is None:
                end = pos + 2
            pos = ((length & 0x3F) << 8) | data[pos + 1]
            jumps += 1
            if jumps > 64:
                raise MalformedWire("compression pointer loop")
            continue
        if length & 0xC0:
            raise MalformedWire(f"bad label length 0x{length:02x}")
        if length == 0:
            if end is None:
                end = pos + 1
            break
        if pos + 1 + length > len(data):
            raise MalformedWire("label overruns message")
        labels.append(data[pos + 1:pos + 1 + length].decode("latin-1"))
        pos += 1 + length
    cur.pos = end
    return ".".join(labels)


def _encode_name(name: str, path: str) -> bytes:
    out = bytearray()
    if name:
        for label in name.split("."):
            encoded = label.encode("latin-1")
            if not 1 <= len(encoded) <= 63:
                raise Unencodable(path, f"label {label!r} length out of range")
            out.append(len(encoded))
            out += encoded
    out.append(0)
    if len(out) > 255:
        raise Unencodable(path, "name longer than 255 octets")
    return bytes(out)


def _decode_rr(cur: Cursor, data: bytes, section: str) -> FieldNode:
    name = _decode_name(cur, data)
    rtype = cur.u16()
    rclass = cur.u16()
    ttl = cur.u32()
    rdlength = cur.u16()
    rdata = cur.take(rdlength)
    return comp(
        section,
        text("name", name),
        uint("type", rtype),
        FieldNode("class", Uint(rclass)),
        uint("ttl", ttl, bits=32),
        uint("rdlength", rdlength, derived=True),
        raw("rdata", rdata),
    )


def decode(message_type: str, data: bytes) -> Message:
    if not data:
        raise MalformedWire("empty DNS message")
    cur = Cursor(data)
    try:
        header = comp(
            "header",
            uint("id", cur.u16()),
            uint("flags", cur.u16()),
            uint("qdcount", cur.u16(), derived=True),
            uint("ancount", cur.u16(), derived=True),
            uint("nscount", cur.u16(), derived=True),
            uint("arcount", cur.u16(), derived=True),
        )
        counts = {c.name: c.value.value for c in header.children[2:]}
        children = [header]
        for _ in range(counts["qdcount"]):
            qname = _decode_name(cur, data)
            children.append(comp(
                "question",
                text("qname", qname),
                uint("qtype", cur.u16()),
                FieldNode("qclass", Uint(cur.u16())),
            ))
        for section, key in zip(_SECTIONS, ("ancount", "nscount", "arcount")):
            for _ in range(counts[key]):
                children.append(_decode_rr(cur, data, section))
    except MalformedWire:
        raise
    if cur.remaining:
        raise MalformedWire(f"{cur.remaining} trailing bytes after DNS message")
    return Message(PROTOCOL, message_type, comp("root", *children))


def candidate_types(msg: Message) -> list[str]:
    return [message_type_of(msg)]


def message_type_of(msg: Message) -> str:
    for c in msg.root.children:
        if c.name == "header":
            for f in c.children:
                if f.name == "flags" and isinstance(f.value, Uint):
                    return "DNS Response" if f.value.value & 0x8000 else "DNS Query"
    return "DNS Query"


def _encode_node(node: FieldNode, path: str) -> bytes:
    v = node.value
    if isinstance(v, Uint):
        return v.value.to_bytes(v.bits // 8, "big")
    if isinstance(v, Bytes):
        return v.data
    if isinstance(v, Text):
        return _encode_name(v.text, path)
    if isinstance(v, Composite):
        return b"".join(_encode_node(c, f"{path}.{c.name}") for c in v.children)
    raise Unencodable(path, f"unsupported value {v!r}")


_COUNTED = {"qdcount": "question", "ancount": "answer",
            "nscount": "authority", "arcount": "additional"}


def repair_derived(msg: Message, freeze=()) -> Message:
    frozen = canonical_freeze_paths(msg, freeze)
    root_names = [c.name for c in msg.root.children]

    def recompute(parent: FieldNode, siblings, pos, path):
        node = siblings[pos]
        if parent.name == "header" and node.name in _COUNTED:
            return Uint(root_names.count(_COUNTED[node.name]), 16)
        if node.name == "rdlength":
            rdata = next((s for s in siblings if s.name == "rdata"), None)
            if rdata is None:
                return None
            return Uint(len(_encode_node(rdata, path)), 16)
        return None

    return replace(msg, root=repair_tree(msg.root, frozen, recompute))


def encode(msg: Message, freeze=()) -> bytes:
    repaired = repair_derived(msg, freeze=freeze)
    return b"".join(_encode_node(c, c.name) for c in repaired.root.children)
