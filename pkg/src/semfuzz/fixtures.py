"""Reference network fixtures: small in-process servers with optional
planted bugs.

Each fixture behaves strictly to spec when started with an empty bug
set (the control) and misbehaves in one targeted way per enabled bug:

    psk-not-last-accepted      TLS server answers ServerHello even when the
                               pre_shared_key extension is not last.
    cl-whitespace-accepted     HTTP server accepts a header whose name has
                               trailing whitespace before the colon.
    dns-extra-record-cached    DNS resolver caches answer records for
                               domains it never asked about.
    accept-encoding-crash-sim  HTTP server dies (and stays dead) when a
                               request lists 8+ unknown content codings.
"""
from __future__ import annotations

import logging
import socket
import socketserver
import threading
from dataclasses import dataclass, field as dc_field
from typing import Optional

from . import codecs
from .campaign import read_http_message, read_tls_record
from .codecs import tls13
from .codecs.base import CodecError, MalformedWire
from .model import Message, comp, get, raw, uint

log = logging.getLogger(__name__)

BUG_PSK_NOT_LAST = "psk-not-last-accepted"
BUG_CL_WHITESPACE = "cl-whitespace-accepted"
BUG_DNS_EXTRA_RECORD = "dns-extra-record-cached"
BUG_AE_CRASH = "accept-encoding-crash-sim"

ALL_BUGS = frozenset({BUG_PSK_NOT_LAST, BUG_CL_WHITESPACE,
                      BUG_DNS_EXTRA_RECORD, BUG_AE_CRASH})

KNOWN_CODINGS = {"gzip", "deflate", "br", "identity", "compress", "zstd", "*"}
CRASH_CODING_THRESHOLD = 8


class FixtureError(Exception):
    pass


class PortInUse(FixtureError):
    pass


@dataclass
class FixtureConfig:
    protocol: str                      # DNS | HTTP1 | TLS13
    bugs: frozenset = frozenset()
    host: str = "127.0.0.1"
    port: int = 0                      # 0: pick an ephemeral port
    upstream: Optional[tuple[str, int]] = None   # DNS forwarding target
    upstream_timeout_ms: int = 800

    def __post_init__(self):
        unknown = set(self.bugs) - ALL_BUGS
        if unknown:
            raise FixtureError(f"unknown bug ids: {sorted(unknown)}")


@dataclass
class FixtureState:
    bugs: frozenset
    crashed: bool = False
    dns_cache: dict = dc_field(default_factory=dict)
    lock: threading.Lock = dc_field(default_factory=threading.Lock)


# --- HTTP ------------------------------------------------------------------


def _http_response(status: int, reason: str, body: bytes = b"") -> bytes:
    head = (f"HTTP/1.1 {status} {reason}\r\n"
            f"Content-Length: {len(body)}\r\n"
            "Connection: close\r\n\r\n").encode("latin-1")
    return head + body


def parse_codings(value: str) -> list[str]:
    out = []
    for part in value.split(","):
        coding = part.split(";")[0].strip().lower()
        if coding:
            out.append(coding)
    return out


def http_handle_request(data: bytes, state: FixtureState) -> Optional[bytes]:
    """None means: close the connection without responding."""
    head, _, _ = data.partition(b"\r\n\r\n")
    lines = head.split(b"\r\n")
    try:
        method, target, version = lines[0].decode("latin-1").split(" ")
    except (ValueError, UnicodeDecodeError):
        return _http_response(400, "Bad Request")
    if not version.startswith("HTTP/1."):
        return _http_response(400, "Bad Request")
    headers = []
    for line in lines[1:]:
        raw_name, sep, value = line.decode("latin-1").partition(":")
        if not sep:
            return _http_response(400, "Bad Request")
        headers.append((raw_name, value.strip()))
    for raw_name, _ in headers:
        # RFC 9112: no whitespace between field name and colon
        if raw_name != raw_name.rstrip() and BUG_CL_WHITESPACE not in state.bugs:
            return _http_response(400, "Bad Request")
        if raw_name != raw_name.strip() and raw_name.rstrip() == raw_name:
            return _http_response(400, "Bad Request")  # leading ws: obs-fold
    for raw_name, value in headers:
        if raw_name.strip().lower() == "accept-encoding":
            unknown = [c for c in parse_codings(value) if c not in KNOWN_CODINGS]
            if len(unknown) >= CRASH_CODING_THRESHOLD and BUG_AE_CRASH in state.bugs:
                with state.lock:
                    state.crashed = True
                log.warning("http fixture: simulated crash on %d unknown codings",
                            len(unknown))
                return None
    return _http_response(200, "OK", b"ok\n")


class _HttpHandler(socketserver.BaseRequestHandler):
    def handle(self):
        state: FixtureState = self.server.state
        with state.lock:
            if state.crashed:
                return  # dead process: close without reading
        self.request.settimeout(2.0)
        try:
            data = read_http_message(self.request)
        except (socket.timeout, ConnectionResetError, OSError):
            return
        response = http_handle_request(data, state)
        if response is not None:
            try:
                self.request.sendall(response)
            except OSError:
                pass


# --- TLS -------------------------------------------------------------------


def server_hello_bytes(session_id: bytes = b"") -> bytes:
    sv = comp("extensions", uint("type", 43), uint("length", 0, derived=True),
              raw("data", b"\x03\x04"))
    handshake = comp(
        "handshake",
        uint("handshake_type", tls13.HANDSHAKE_SERVER_HELLO, bits=8),
        uint("length", 0, bits=24, derived=True),
        uint("legacy_version", 0x0303),
        raw("random", b"\xab" * 32),
        uint("session_id_length", 0, bits=8, derived=True),
        raw("session_id", session_id),
        uint("cipher_suite", 0x1301),
        uint("compression_method", 0, bits=8),
        uint("extensions_length", 0, derived=True),
        sv,
    )
    msg = Message("TLS13", "ServerHello", comp(
        "root",
        uint("content_type", tls13.CONTENT_HANDSHAKE, bits=8),
        uint("legacy_record_version", 0x0303),
        uint("record_length", 0, derived=True),
        handshake,
    ))
    return tls13.encode(msg)


def tls_handle_record(data: bytes, state: FixtureState) -> bytes:
    try:
        msg = codecs.decode("TLS13", "ClientHello", data)
    except (MalformedWire, CodecError):
        return tls13.alert_bytes(description=50)   # decode_error
    hs = next((c for c in msg.root.children if c.name == "handshake"), None)
    if hs is None:
        return tls13.alert_bytes(description=10)   # unexpected_message
    hs_type = next(c.value.value for c in hs.children if c.name == "handshake_type")
    if hs_type != tls13.HANDSHAKE_CLIENT_HELLO:
        return tls13.alert_bytes(description=10)
    names = tls13.extension_names(msg)
    # RFC 8446 4.2.11: pre_shared_key must be the last extension
    if "pre_shared_key" in names and names[-1] != "pre_shared_key":
        if BUG_PSK_NOT_LAST not in state.bugs:
            return tls13.alert_bytes(description=47)   # illegal_parameter
    session_id = get(msg, "handshake.session_id").value.data
    return server_hello_bytes(session_id)


class _TlsHandler(socketserver.BaseRequestHandler):
    def handle(self):
        self.request.settimeout(2.0)
        try:
            data = read_tls_record(self.request)
        except (socket.timeout, ConnectionResetError, OSError):
            return
        try:
            self.request.sendall(tls_handle_record(data, self.server.state))
        except OSError:
            pass


# --- DNS -------------------------------------------------------------------


def _encode_dns_name(name: str) -> bytes:
    out = bytearray()
    if name:
        for label in name.split("."):
            out.append(len(label))
            out += label.encode("latin-1")
    out.append(0)
    return bytes(out)


def _dns_reply(query: bytes, qname: str, qtype: int, flags: int,
               answers: list[dict]) -> bytes:
    out = bytearray(query[:2])
    out += flags.to_bytes(2, "big")
    out += (1).to_bytes(2, "big") + len(answers).to_bytes(2, "big") + b"\x00\x00\x00\x00"
    out += _encode_dns_name(qname) + qtype.to_bytes(2, "big") + b"\x00\x01"
    for rr in answers:
        out += _encode_dns_name(rr["name"])
        out += rr["type"].to_bytes(2, "big") + rr["class"].to_bytes(2, "big")
        out += rr["ttl"].to_bytes(4, "big")
        out += len(rr["rdata"]).to_bytes(2, "big") + rr["rdata"]
    return bytes(out)


def _parse_query(data: bytes):
    msg = codecs.decode("DNS", "DNS Query", data)
    q = next(c for c in msg.root.children if c.name == "question")
    fields = {c.name: c for c in q.children}
    return fields["qname"].value.text, fields["qtype"].value.value


def _response_answers(data: bytes) -> list[dict]:
    msg = codecs.decode("DNS", "DNS Response", data)
    out = []
    for c in msg.root.children:
        if c.name != "answer":
            continue
        fields = {k.name: k for k in c.children}
        out.append({
            "name": fields["name"].value.text,
            "type": fields["type"].value.value,
            "class": fields["class"].value.value,
            "ttl": fields["ttl"].value.value,
            "rdata": fields["rdata"].value.data,
        })
    return out


def dns_handle_query(data: bytes, state: FixtureState,
                     upstream: Optional[tuple[str, int]],
                     upstream_timeout_ms: int) -> bytes:
    try:
        qname, qtype = _parse_query(data)
    except (CodecError, StopIteration, KeyError):
        return data[:2] + b"\x81\x81" + data[4:12] if len(data) >= 12 else b""
    key = (qname.lower(), qtype)
    with state.lock:
        cached = state.dns_cache.get(key)
    if cached:
        return _dns_reply(data, qname, qtype, 0x8180, cached)
    if upstream is None:
        return _dns_reply(data, qname, qtype, 0x8182, [])  # SERVFAIL
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as up:
        up.settimeout(upstream_timeout_ms / 1000)
        try:
            up.sendto(data, upstream)
            reply, _ = up.recvfrom(65535)
        except socket.timeout:
            return _dns_reply(data, qname, qtype, 0x8182, [])
    try:
        answers = _response_answers(reply)
    except CodecError:
        return _dns_reply(data, qname, qtype, 0x8182, [])
    accept_any = BUG_DNS_EXTRA_RECORD in state.bugs
    with state.lock:
        for rr in answers:
            if accept_any or rr["name"].lower() == qname.lower():
                bucket = state.dns_cache.setdefault(
                    (rr["name"].lower(), rr["type"]), [])
                if rr not in bucket:
                    bucket.append(rr)
    return reply


class _DnsHandler(socketserver.BaseRequestHandler):
    def handle(self):
        data, sock = self.request
        srv = self.server
        reply = dns_handle_query(data, srv.state, srv.upstream,
                                 srv.upstream_timeout_ms)
        if reply:
            sock.sendto(reply, self.client_address)


# --- lifecycle -------------------------------------------------------------


class _TcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class _UdpServer(socketserver.ThreadingUDPServer):
    daemon_threads = True


@dataclass
class FixtureHandle:
    config: FixtureConfig
    state: FixtureState
    server: socketserver.BaseServer
    thread: threading.Thread
    port: int
    _closed: bool = False

    def shutdown(self) -> None:
        if self._closed:
            return
        self._closed = True
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def serve(config: FixtureConfig) -> FixtureHandle:
    state = FixtureState(bugs=frozenset(config.bugs))
    handler = {"HTTP1": _HttpHandler, "TLS13": _TlsHandler, "DNS": _DnsHandler}
    if config.protocol not in handler:
        raise FixtureError(f"no fixture for protocol {config.protocol!r}")
    server_cls = _UdpServer if config.protocol == "DNS" else _TcpServer
    try:
        server = server_cls((config.host, config.port), handler[config.protocol])
    except OSError as e:
        raise PortInUse(f"cannot bind {config.host}:{config.port}: {e}") from e
    server.state = state
    server.upstream = config.upstream
    server.upstream_timeout_ms = config.upstream_timeout_ms
    thread = threading.Thread(target=server.serve_forever, daemon=True,
                              name=f"fixture-{config.protocol}")
    thread.start()
    return FixtureHandle(config=config, state=state, server=server,
                         thread=thread, port=server.server_address[1])
