#!/usr/bin/env python3
"""Generate the bundled seed corpus under data/seeds/ and the mixed
tshark-style capture fixture under data/captures/.

Deterministic: all randomness comes from a fixed-seed RNG, so re-running
reproduces the committed files byte for byte.
"""
from __future__ import annotations

import json
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from semfuzz import codecs
from semfuzz.model import FieldNode, Message, Uint, comp, raw, text, uint

ROOT = Path(__file__).resolve().parents[1]
SEEDS = ROOT / "data" / "seeds"
CAPTURES = ROOT / "data" / "captures"

rng = random.Random(0xC0DEC)


def rand_bytes(n: int) -> bytes:
    return bytes(rng.randrange(256) for _ in range(n))


# --- DNS -------------------------------------------------------------------

def dns_header(ident, flags):
    return comp("header", uint("id", ident), uint("flags", flags),
                uint("qdcount", 0, derived=True), uint("ancount", 0, derived=True),
                uint("nscount", 0, derived=True), uint("arcount", 0, derived=True))


def question(name, qtype=1, qclass=1):
    return comp("question", text("qname", name), uint("qtype", qtype),
                FieldNode("qclass", Uint(qclass)))


def rr(section, name, rtype, rdata, ttl=300, rclass=1):
    return comp(section, text("name", name), uint("type", rtype),
                FieldNode("class", Uint(rclass)), uint("ttl", ttl, bits=32),
                uint("rdlength", 0, derived=True), raw("rdata", rdata))


def dns_query(ident, name, qtype=1):
    return Message("DNS", "DNS Query",
                   comp("root", dns_header(ident, 0x0100), question(name, qtype)))


def dns_response(ident, name, answers, qtype=1, flags=0x8180):
    kids = [dns_header(ident, flags), question(name, qtype)] + answers
    return Message("DNS", "DNS Response", comp("root", *kids))


def a_rdata(ip: str) -> bytes:
    return bytes(int(x) for x in ip.split("."))


DNS_SEEDS = [
    ("query_www_example_a", dns_query(0x1A2B, "www.example.com")),
    ("query_example_aaaa", dns_query(0x1A2C, "example.com", qtype=28)),
    ("query_mail_mx", dns_query(0x1A2D, "example.com", qtype=15)),
    ("query_txt", dns_query(0x1A2E, "info.example.org", qtype=16)),
    ("query_ns", dns_query(0x1A2F, "example.net", qtype=2)),
    ("query_host_a", dns_query(0x1B30, "host.test.example")),
    ("response_a_www_example",
     dns_response(0x1A2B, "www.example.com",
                  [rr("answer", "www.example.com", 1, a_rdata("93.184.216.34"))])),
    ("response_two_answers",
     dns_response(0x2B3C, "lb.example.com",
                  [rr("answer", "lb.example.com", 1, a_rdata("10.0.0.1")),
                   rr("answer", "lb.example.com", 1, a_rdata("10.0.0.2"))])),
    ("response_with_authority",
     dns_response(0x2B3D, "example.net",
                  [rr("answer", "example.net", 1, a_rdata("192.0.2.7")),
                   rr("authority", "example.net", 2, b"\x02ns\x07example\x03net\x00")])),
    ("response_nxdomain",
     dns_response(0x2B3E, "missing.example.org", [], flags=0x8183)),
    ("response_txt",
     dns_response(0x2B3F, "info.example.org",
                  [rr("answer", "info.example.org", 16, b"\x05hello")], qtype=16)),
]


# --- HTTP ------------------------------------------------------------------

def http_request(lines: list[str], body: bytes = b"") -> Message:
    wire = ("\r\n".join(lines) + "\r\n\r\n").encode("latin-1") + body
    return codecs.decode("HTTP1", "http request", wire)


HTTP_SEEDS = [
    ("get_root", http_request([
        "GET / HTTP/1.1",
        "Host: fixture.test",
        "User-Agent: semfuzz-seed/0.1",
        "Accept: */*",
    ])),
    ("post_form", http_request([
        "POST /submit HTTP/1.1",
        "Host: fixture.test",
        "Content-Type: application/x-www-form-urlencoded",
        "Content-Length: 9",
    ], b"a=1&b=two")),
    ("get_accept_encoding", http_request([
        "GET /resource HTTP/1.1",
        "Host: fixture.test",
        "Accept-Encoding: gzip, deflate",
        "User-Agent: semfuzz-seed/0.1",
    ])),
    ("get_authorization", http_request([
        "GET /private HTTP/1.1",
        "Host: fixture.test",
        "Authorization: Basic dXNlcjpwYXNz",
        "Accept: text/html",
    ])),
    ("get_cache_control", http_request([
        "GET /cached HTTP/1.1",
        "Host: fixture.test",
        "Cache-Control: no-cache",
        "Date: Tue, 11 Feb 2025 10:00:00 GMT",
    ])),
    ("post_chunked", http_request([
        "POST /upload HTTP/1.1",
        "Host: fixture.test",
        "Transfer-Encoding: chunked",
        "Content-Type: application/octet-stream",
    ], b"5\r\nhello\r\n0\r\n\r\n")),
]


# --- TLS 1.3 ---------------------------------------------------------------

def extension(name_or_type, data: bytes) -> FieldNode:
    if isinstance(name_or_type, str):
        ext_type = codecs.tls13.EXTENSION_TYPES[name_or_type]
    else:
        ext_type = name_or_type
    return comp("extensions", uint("type", ext_type),
                uint("length", 0, derived=True), raw("data", data))


def client_hello(message_type: str, extensions: list[FieldNode],
                 session_id: bytes | None = None) -> Message:
    if session_id is None:
        session_id = rand_bytes(32)
    handshake = comp(
        "handshake",
        uint("handshake_type", 1, bits=8),
        uint("length", 0, bits=24, derived=True),
        uint("legacy_version", 0x0303),
        raw("random", rand_bytes(32)),
        uint("session_id_length", 0, bits=8, derived=True),
        raw("session_id", session_id),
        uint("cipher_suites_length", 0, derived=True),
        raw("cipher_suites", bytes.fromhex("130113021303")),
        uint("compression_methods_length", 0, bits=8, derived=True),
        raw("compression_methods", b"\x00"),
        uint("extensions_length", 0, derived=True),
        *extensions,
    )
    return Message("TLS13", message_type, comp(
        "root",
        uint("content_type", 22, bits=8),
        uint("legacy_record_version", 0x0301),
        uint("record_length", 0, derived=True),
        handshake,
    ))


SUPPORTED_VERSIONS = extension("supported_versions", bytes.fromhex("020304"))
SUPPORTED_GROUPS = extension("supported_groups", bytes.fromhex("0004001d0017"))
SIG_ALGS = extension("signature_algorithms", bytes.fromhex("000404030804"))
KEY_SHARE = extension("key_share", bytes.fromhex("0024001d0020") + rand_bytes(32))
SERVER_NAME = extension("server_name", bytes.fromhex("000f00000c") + b"fixture.test")
PSK_MODES = extension("psk_key_exchange_modes", bytes.fromhex("0201"))
ALPN = extension("application_layer_protocol_negotiation",
                 bytes.fromhex("000908") + b"http/1.1")


def psk_extension() -> FieldNode:
    identity = rand_bytes(16)
    binder = rand_bytes(32)
    identities = (2 + len(identity) + 4).to_bytes(2, "big") + \
        len(identity).to_bytes(2, "big") + identity + (0).to_bytes(4, "big")
    binders = (1 + len(binder)).to_bytes(2, "big") + \
        len(binder).to_bytes(1, "big") + binder
    return extension("pre_shared_key", identities + binders)


TLS_SEEDS = [
    ("clienthello_key_share", client_hello(
        "ClientHello with Key Share Extension",
        [SERVER_NAME, SUPPORTED_GROUPS, SIG_ALGS, SUPPORTED_VERSIONS, KEY_SHARE])),
    ("clienthello_pre_shared_key", client_hello(
        "ClientHello with Pre Shared Key Extension",
        [SUPPORTED_GROUPS, SIG_ALGS, KEY_SHARE, SUPPORTED_VERSIONS, PSK_MODES,
         psk_extension()])),
    ("clienthello_server_name", client_hello(
        "ClientHello with Server Name Extension",
        [SERVER_NAME, SUPPORTED_VERSIONS, KEY_SHARE])),
    ("clienthello_alpn", client_hello(
        "ClientHello with Application Layer Protocol Negotiation Extension",
        [ALPN, SUPPORTED_VERSIONS, KEY_SHARE])),
    ("clienthello_session_ticket", client_hello(
        "ClientHello with Session Ticket Extension",
        [extension("session_ticket", b""), SUPPORTED_VERSIONS, KEY_SHARE])),
    ("clienthello_no_extension", client_hello(
        "ClientHello with No Extension", [], session_id=b"")),
]


def write_seed(subdir: str, name: str, msg: Message) -> bytes:
    wire = codecs.encode(msg)
    # sanity: canonical round-trip before committing the fixture
    again = codecs.decode(msg.protocol, msg.message_type, wire)
    assert codecs.encode(again) == wire, name
    out = SEEDS / subdir / f"{name}.bin"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(wire)
    return wire


def tshark_frame(number: int, proto_key: str, payload: bytes, layers: dict) -> dict:
    layers = dict(layers)
    layers[f"{proto_key}_raw"] = [payload.hex(), 0, len(payload), 0, 1]
    return {
        "_index": "packets-2025-02-11",
        "_type": "doc",
        "_source": {"layers": {"frame": {"frame.number": str(number)}, **layers}},
    }


def main():
    all_wire = {}
    for sub, seeds in (("dns", DNS_SEEDS), ("http", HTTP_SEEDS), ("tls", TLS_SEEDS)):
        for name, msg in seeds:
            all_wire[(sub, name)] = write_seed(sub, name, msg)
    print(f"wrote {len(all_wire)} seeds under {SEEDS}")

    frames = []
    n = 1
    for (sub, name), wire in all_wire.items():
        key = {"dns": "dns", "http": "http", "tls": "tls"}[sub]
        frames.append(tshark_frame(n, key, wire, {key: {}}))
        n += 1
    # a frame with no known protocol layer, to exercise skip counting
    frames.append(tshark_frame(n, "data", b"\x00\x01\x02", {"data": {}}))
    CAPTURES.mkdir(parents=True, exist_ok=True)
    capture = CAPTURES / "mixed.json"
    capture.write_text(json.dumps(frames, indent=1) + "\n")
    print(f"wrote {capture} with {len(frames)} frames")


if __name__ == "__main__":
    main()
