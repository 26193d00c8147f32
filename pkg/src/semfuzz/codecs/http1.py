"""HTTP/1.1 request/response codec.

Headers keep their exact byte-level spelling: the name node stores every
octet before the colon (including any trailing whitespace) and the value
node everything after it up to CRLF.  The body is opaque bytes, with
chunked framing used only to locate the end of the message.  Nothing is
normalized here; oracles that need folded names do their own folding.
"""
from __future__ import annotations

from dataclasses import replace

from ..model import Bytes, FieldNode, Message, Text, comp, raw, text
from .base import MalformedWire, Unencodable

PROTOCOL = "HTTP1"

_CRLF = b"\r\n"


def _header_node_name(raw_name: str) -> str:
    name = raw_name.strip()
    if not name or any(ch in name for ch in ".[]"):
        return "header"
    return name


def _split_head(data: bytes):
    sep = data.find(b"\r\n\r\n")
    if sep < 0:
        raise MalformedWire("no end of HTTP header block")
    return data[:sep].split(_CRLF), data[sep + 4:]


def _decode_headers(lines) -> list[FieldNode]:
    nodes = []
    for line in lines:
        colon = line.find(b":")
        if colon < 0:
            raise MalformedWire(f"header line without colon: {line!r}")
        raw_name = line[:colon].decode("latin-1")
        raw_value = line[colon + 1:].decode("latin-1")
        nodes.append(comp(
            _header_node_name(raw_name),
            text("name", raw_name),
            text("value", raw_value),
        ))
    return nodes


def decode(message_type: str, data: bytes) -> Message:
    if not data:
        raise MalformedWire("empty HTTP message")
    lines, body = _split_head(data)
    first = lines[0].decode("latin-1")
    parts = first.split(" ")
    if first.startswith("HTTP/"):
        bits = first.split(" ", 2)
        if len(bits) < 2:
            raise MalformedWire(f"bad status line {first!r}")
        start = comp(
            "status_line",
            text("version", bits[0]),
            text("status", bits[1]),
            text("reason", bits[2] if len(bits) > 2 else ""),
        )
    else:
        if len(parts) != 3 or not all(parts):
            raise MalformedWire(f"bad request line {first!r}")
        start = comp(
            "request_line",
            text("method", parts[0]),
            text("target", parts[1]),
            text("version", parts[2]),
        )
    headers = comp("headers", *_decode_headers(lines[1:]))
    return Message(PROTOCOL, message_type, comp(
        "root", start, headers, raw("body", body)))


def headers_of(msg: Message) -> list[tuple[str, str]]:
    """(raw name, raw value) pairs in wire order."""
    out = []
    for h in _headers_node(msg).children:
        fields = {c.name: c for c in h.children}
        if "name" in fields and isinstance(fields["name"].value, Text):
            out.append((fields["name"].value.text,
                        fields["value"].value.text if "value" in fields else ""))
    return out


def _headers_node(msg: Message) -> FieldNode:
    for c in msg.root.children:
        if c.name == "headers":
            return c
    return comp("headers")


def candidate_types(msg: Message) -> list[str]:
    first = msg.root.children[0] if msg.root.children else None
    if first is None:
        return []
    if first.name == "status_line":
        return ["http response"]
    out = [f"http request with {name.strip()} header" for name, _ in headers_of(msg)]
    # Spellings used by the shipped message-type list for non-header rows.
    if any(name.strip().lower() == "cache-control" for name, _ in headers_of(msg)):
        out.append("http request with http.cache_control header")
    out.append("http request with request.line header")
    return out


def _encode_start(node: FieldNode) -> bytes:
    fields = {c.name: c for c in node.children if isinstance(c.value, Text)}
    if node.name == "status_line":
        line = f"{fields['version'].value.text} {fields['status'].value.text}"
        reason = fields.get("reason")
        if reason is not None and reason.value.text:
            line += f" {reason.value.text}"
    else:
        line = " ".join(fields[k].value.text for k in ("method", "target", "version"))
    return line.encode("latin-1")


def _encode_header(node: FieldNode, path: str) -> bytes:
    fields = {c.name: c for c in node.children}
    try:
        name = fields["name"].value.text
        value = fields["value"].value.text
    except (KeyError, AttributeError):
        raise Unencodable(path, "header needs text name and value children") from None
    if any(ch in name for ch in "\r\n:"):
        raise Unencodable(path, f"illegal octet in header name {name!r}")
    if "\r" in value or "\n" in value:
        raise Unencodable(path, "CR/LF in header value")
    return f"{name}:{value}".encode("latin-1")


def repair_derived(msg: Message, freeze=()) -> Message:
    # HTTP carries no derived fields in this representation.
    return msg


def encode(msg: Message, freeze=()) -> bytes:
    out = bytearray()
    start_seen = False
    body = b""
    for c in msg.root.children:
        if c.name in ("request_line", "status_line"):
            out += _encode_start(c) + _CRLF
            start_seen = True
        elif c.name == "headers":
            for i, h in enumerate(c.children):
                out += _encode_header(h, f"headers.{h.name}[{i}]") + _CRLF
        elif c.name == "body":
            if not isinstance(c.value, Bytes):
                raise Unencodable("body", "body must be bytes")
            body = c.value.data
        else:
            raise Unencodable(c.name, "unexpected top-level HTTP field")
    if not start_seen:
        raise Unencodable("root", "missing request or status line")
    out += _CRLF
    out += body
    return bytes(out)
