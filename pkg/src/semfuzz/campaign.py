"""Campaign execution: send test cases at a live target and judge responses.

The oracle is deliberately two-valued.  Per protocol: DNS is Normal only
when the response answers exactly the queried domain; TLS is Normal only
when the first record is a ServerHello; HTTP is Normal only on a success
status.  Timeouts, refusals, and resets are Error everywhere.  A verdict
is a potential vulnerability precisely when expected and actual classes
differ.
"""
from __future__ import annotations

import json
import logging
import socket
import time
from dataclasses import dataclass, field
from typing import Optional

from . import codecs
from .codecs.base import MalformedWire
from .model import get
from .strategies import FeedbackClass
from .testcases import TestCase

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_MS = 2000


class CampaignError(Exception):
    pass


@dataclass
class Endpoint:
    host: str
    port: int
    transport: str = "tcp"            # "tcp" | "udp"
    mode: str = "client"              # "client" | "responder"
    listen_port: int = 0              # responder mode: port the peer calls back on


# --- raw outcomes ----------------------------------------------------------


@dataclass(frozen=True)
class OutcomeBytes:
    octets: bytes
    rtt_ms: float = 0.0

    kind = "bytes"


@dataclass(frozen=True)
class OutcomeTimeout:
    deadline_ms: int

    kind = "timeout"


@dataclass(frozen=True)
class OutcomeRefused:
    kind = "refused"


@dataclass(frozen=True)
class OutcomeReset:
    kind = "reset"


@dataclass
class Verdict:
    case_id: str
    expected: FeedbackClass
    actual: str                       # "Normal" | "Error" | "Indeterminate"
    status: str                       # Consistent | PotentialVulnerability | Indeterminate
    outcome: str
    detail: str = ""
    response_hex: str = ""
    rule_id: str = ""
    strategy_id: str = ""

    def to_json(self) -> dict:
        return {
            "case_id": self.case_id,
            "expected": self.expected.value,
            "actual": self.actual,
            "status": self.status,
            "outcome": self.outcome,
            "detail": self.detail,
            "response_hex": self.response_hex,
            "rule_id": self.rule_id,
            "strategy_id": self.strategy_id,
        }


# --- protocol-aware single-response reads ----------------------------------


def _read_exact(sock: socket.socket, n: int, buf: bytearray) -> bytes:
    while len(buf) < n:
        chunk = sock.recv(4096)
        if not chunk:
            raise ConnectionResetError("peer closed early")
        buf += chunk
    out = bytes(buf[:n])
    del buf[:n]
    return out


def read_http_message(sock: socket.socket) -> bytes:
    buf = bytearray()
    while b"\r\n\r\n" not in buf:
        chunk = sock.recv(4096)
        if not chunk:
            if not buf:
                raise ConnectionResetError("closed without response")
            return bytes(buf)
        buf += chunk
    head, _, rest = bytes(buf).partition(b"\r\n\r\n")
    body = bytearray(rest)
    headers = {}
    for line in head.split(b"\r\n")[1:]:
        name, _, value = line.partition(b":")
        headers[name.strip().lower()] = value.strip()
    if headers.get(b"transfer-encoding", b"").lower() == b"chunked":
        while b"\r\n0\r\n" not in body and not body.endswith(b"0\r\n\r\n"):
            chunk = sock.recv(4096)
            if not chunk:
                break
            body += chunk
    else:
        try:
            want = int(headers.get(b"content-length", b"0"))
        except ValueError:
            want = 0
        while len(body) < want:
            chunk = sock.recv(4096)
            if not chunk:
                break
            body += chunk
    return head + b"\r\n\r\n" + bytes(body)


def read_tls_record(sock: socket.socket) -> bytes:
    buf = bytearray()
    header = _read_exact(sock, 5, buf)
    length = int.from_bytes(header[3:5], "big")
    body = _read_exact(sock, length, buf)
    return header + body


def _read_response_unit(sock: socket.socket, protocol: str) -> bytes:
    if protocol == "HTTP1":
        return read_http_message(sock)
    if protocol == "TLS13":
        return read_tls_record(sock)
    # generic: first chunk
    data = sock.recv(65535)
    if not data:
        raise ConnectionResetError("closed without response")
    return data


# --- execute ---------------------------------------------------------------


def execute(case: TestCase, ep: Endpoint, timeout_ms: int = DEFAULT_TIMEOUT_MS,
            protocol: Optional[str] = None):
    protocol = protocol or case.protocol
    if ep.mode == "responder":
        if protocol == "DNS":
            return _execute_dns_responder(case, ep, timeout_ms)
        return _execute_generic_responder(case, ep, timeout_ms, protocol)
    if ep.transport == "udp":
        return _execute_udp(case.wire, ep, timeout_ms)
    return _execute_tcp(case.wire, ep, timeout_ms, protocol)


def _execute_udp(wire: bytes, ep: Endpoint, timeout_ms: int):
    start = time.monotonic()
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.settimeout(timeout_ms / 1000)
        try:
            s.sendto(wire, (ep.host, ep.port))
            data, _ = s.recvfrom(65535)
        except socket.timeout:
            return OutcomeTimeout(timeout_ms)
        except ConnectionRefusedError:
            return OutcomeRefused()
        except ConnectionResetError:
            return OutcomeReset()
    return OutcomeBytes(data, (time.monotonic() - start) * 1000)


def _execute_tcp(wire: bytes, ep: Endpoint, timeout_ms: int, protocol: str):
    start = time.monotonic()
    try:
        with socket.create_connection((ep.host, ep.port), timeout=timeout_ms / 1000) as s:
            s.settimeout(timeout_ms / 1000)
            s.sendall(wire)
            data = _read_response_unit(s, protocol)
    except ConnectionRefusedError:
        return OutcomeRefused()
    except ConnectionResetError:
        return OutcomeReset()
    except socket.timeout:
        return OutcomeTimeout(timeout_ms)
    except OSError:
        return OutcomeReset()
    return OutcomeBytes(data, (time.monotonic() - start) * 1000)


def _dns_question(msg) -> tuple[str, int]:
    q = next(c for c in msg.root.children if c.name == "question")
    fields = {c.name: c for c in q.children}
    return fields["qname"].value.text, fields["qtype"].value.value


def _dns_extra_owner(msg, qname: str) -> Optional[str]:
    for c in msg.root.children:
        if c.name == "answer":
            fields = {k.name: k for k in c.children}
            owner = fields["name"].value.text
            if owner.lower() != qname.lower():
                return owner
    return None


def build_dns_query(ident: int, qname: str, qtype: int = 1) -> bytes:
    out = ident.to_bytes(2, "big") + b"\x01\x00\x00\x01\x00\x00\x00\x00\x00\x00"
    for label in qname.split("."):
        out += bytes([len(label)]) + label.encode("latin-1")
    out += b"\x00" + qtype.to_bytes(2, "big") + b"\x00\x01"
    return out


def _execute_dns_responder(case: TestCase, ep: Endpoint, timeout_ms: int):
    """Cache-poisoning drive: answer the target's upstream query with the
    case bytes, then probe the cache with a follow-up query for the
    unrelated record the case injected."""
    qname, qtype = _dns_question(case.message)
    extra = _dns_extra_owner(case.message, qname)
    deadline = timeout_ms / 1000
    start = time.monotonic()
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as upstream, \
            socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as client:
        upstream.settimeout(deadline)
        client.settimeout(deadline)
        try:
            upstream.bind((ep.host if ep.host in ("127.0.0.1", "localhost") else "0.0.0.0",
                           ep.listen_port))
        except OSError as e:
            raise CampaignError(f"cannot bind responder port {ep.listen_port}: {e}")
        try:
            client.sendto(build_dns_query(0x4242, qname, qtype), (ep.host, ep.port))
            forwarded, peer = upstream.recvfrom(65535)
            # mirror the forwarded transaction id into the case bytes
            poisoned = forwarded[:2] + case.wire[2:]
            upstream.sendto(poisoned, peer)
            client.recvfrom(65535)  # relayed answer for the trigger query
            follow_name = extra if extra is not None else qname
            client.sendto(build_dns_query(0x4243, follow_name, 1), (ep.host, ep.port))
            data, _ = client.recvfrom(65535)
        except socket.timeout:
            return OutcomeTimeout(timeout_ms)
        except ConnectionRefusedError:
            return OutcomeRefused()
    return OutcomeBytes(data, (time.monotonic() - start) * 1000)


def _execute_generic_responder(case: TestCase, ep: Endpoint, timeout_ms: int,
                               protocol: str):
    """Listen, serve the case bytes as the response to one request, stop."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as srv:
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.settimeout(timeout_ms / 1000)
        try:
            srv.bind((ep.host, ep.listen_port))
            srv.listen(1)
            conn, _ = srv.accept()
        except socket.timeout:
            return OutcomeTimeout(timeout_ms)
        with conn:
            conn.settimeout(timeout_ms / 1000)
            try:
                _read_response_unit(conn, protocol)
                conn.sendall(case.wire)
            except (socket.timeout, ConnectionResetError):
                return OutcomeReset()
    return OutcomeBytes(b"", 0.0)


# --- classify / verify -----------------------------------------------------


def classify(protocol: str, outcome, context: Optional[dict] = None
             ) -> tuple[FeedbackClass, str]:
    """Collapse a raw outcome to Normal/Error per the response mapping."""
    if isinstance(outcome, OutcomeTimeout):
        return FeedbackClass.ERROR, "no response within deadline"
    if isinstance(outcome, OutcomeRefused):
        return FeedbackClass.ERROR, "connection refused"
    if isinstance(outcome, OutcomeReset):
        return FeedbackClass.ERROR, "connection reset / closed without response"
    data = outcome.octets
    if protocol == "DNS":
        return _classify_dns(data, context or {})
    if protocol == "TLS13":
        return _classify_tls(data)
    if protocol == "HTTP1":
        return _classify_http(data)
    return FeedbackClass.ERROR, f"no live oracle for protocol {protocol}"


def _classify_dns(data: bytes, context: dict) -> tuple[FeedbackClass, str]:
    try:
        msg = codecs.decode("DNS", "DNS Response", data)
    except MalformedWire as e:
        return FeedbackClass.ERROR, f"unparseable DNS response: {e}"
    flags = get(msg, "header.flags").value.value
    rcode = flags & 0xF
    if rcode != 0:
        return FeedbackClass.ERROR, f"error RCODE {rcode}"
    try:
        qname, _ = _dns_question(msg)
    except StopIteration:
        return FeedbackClass.ERROR, "response carries no question"
    expected_name = context.get("question", qname)
    answers = [c for c in msg.root.children if c.name == "answer"]
    if not answers:
        return FeedbackClass.ERROR, "no answer records"
    for a in answers:
        owner = next(k for k in a.children if k.name == "name").value.text
        if owner.lower() != expected_name.lower():
            return FeedbackClass.ERROR, f"answer for unrelated domain {owner!r}"
    return FeedbackClass.NORMAL, f"{len(answers)} answer(s) for the queried domain"


def _classify_tls(data: bytes) -> tuple[FeedbackClass, str]:
    if len(data) < 6:
        return FeedbackClass.ERROR, "short TLS response"
    content_type = data[0]
    if content_type == codecs.tls13.CONTENT_ALERT:
        return FeedbackClass.ERROR, f"alert (description {data[6] if len(data) > 6 else data[-1]})"
    if content_type == codecs.tls13.CONTENT_HANDSHAKE and data[5] == codecs.tls13.HANDSHAKE_SERVER_HELLO:
        return FeedbackClass.NORMAL, "handshake continues with ServerHello"
    return FeedbackClass.ERROR, f"unexpected record (content type {content_type})"


def _classify_http(data: bytes) -> tuple[FeedbackClass, str]:
    try:
        line = data.split(b"\r\n", 1)[0].decode("latin-1")
        parts = line.split(" ")
        status = int(parts[1])
    except (IndexError, ValueError, UnicodeDecodeError):
        return FeedbackClass.ERROR, "unparseable HTTP status line"
    if 200 <= status < 400:
        return FeedbackClass.NORMAL, f"status {status}"
    return FeedbackClass.ERROR, f"failure status {status}"


def verify(expected: FeedbackClass, actual: FeedbackClass) -> str:
    return "PotentialVulnerability" if expected != actual else "Consistent"


# --- campaign --------------------------------------------------------------


@dataclass
class CampaignConfig:
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    probe: bool = False
    probe_wire: Optional[bytes] = None
    probe_protocol: str = ""
    workers: int = 8


@dataclass
class Report:
    verdicts: list[Verdict] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    target_down_after: Optional[str] = None

    @property
    def potential_vulnerabilities(self) -> list[Verdict]:
        return [v for v in self.verdicts if v.status == "PotentialVulnerability"]

    def summary(self) -> dict:
        return {
            "total": len(self.verdicts) + len(self.skipped),
            "consistent": sum(1 for v in self.verdicts if v.status == "Consistent"),
            "potential_vulnerabilities": len(self.potential_vulnerabilities),
            "indeterminate": sum(1 for v in self.verdicts if v.status == "Indeterminate"),
            "skipped_invalid": len(self.skipped),
            "target_down_after": self.target_down_after,
        }


def _probe_alive(ep: Endpoint, cfg: CampaignConfig) -> bool:
    if cfg.probe_wire is None:
        return True
    probe_case = TestCase(case_id="probe", strategy_id="probe",
                          protocol=cfg.probe_protocol, message_type="probe",
                          expected=FeedbackClass.NORMAL, wire=cfg.probe_wire,
                          valid=True)
    probe_ep = Endpoint(ep.host, ep.port, ep.transport, "client")
    outcome = execute(probe_case, probe_ep, cfg.timeout_ms, cfg.probe_protocol)
    return isinstance(outcome, OutcomeBytes)


def run_case(case: TestCase, ep: Endpoint, cfg: CampaignConfig) -> Verdict:
    outcome = execute(case, ep, cfg.timeout_ms)
    context = {}
    if case.protocol == "DNS" and ep.mode == "responder" and case.message is not None:
        qname, _ = _dns_question(case.message)
        extra = _dns_extra_owner(case.message, qname)
        context["question"] = extra if extra is not None else qname
    actual, detail = classify(case.protocol, outcome, context)
    return Verdict(
        case_id=case.case_id,
        expected=case.expected,
        actual=actual.value,
        status=verify(case.expected, actual),
        outcome=outcome.kind,
        detail=detail,
        response_hex=outcome.octets.hex() if isinstance(outcome, OutcomeBytes) else "",
        rule_id=case.rule_id,
        strategy_id=case.strategy_id,
    )


def run_campaign(cases: list[TestCase], ep: Endpoint,
                 cfg: Optional[CampaignConfig] = None) -> Report:
    cfg = cfg or CampaignConfig()
    report = Report()
    target_down = False
    runnable = []
    for case in cases:
        if not case.valid or case.wire is None:
            report.skipped.append(case.case_id)
        else:
            runnable.append(case)

    serial = cfg.probe or ep.mode == "responder" or cfg.workers <= 1
    if serial:
        for case in runnable:
            if cfg.probe and not target_down:
                if not _probe_alive(ep, cfg):
                    target_down = True
                    report.target_down_after = (
                        report.verdicts[-1].case_id if report.verdicts else None)
            if target_down:
                report.verdicts.append(Verdict(
                    case_id=case.case_id, expected=case.expected,
                    actual="Indeterminate", status="Indeterminate",
                    outcome="skipped", detail="target down at probe time",
                    rule_id=case.rule_id, strategy_id=case.strategy_id))
                continue
            report.verdicts.append(run_case(case, ep, cfg))
    else:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            report.verdicts = list(pool.map(lambda c: run_case(c, ep, cfg), runnable))
    return report


def write_findings(report: Report, path) -> None:
    with open(path, "w") as fh:
        for v in report.verdicts:
            fh.write(json.dumps(v.to_json(), sort_keys=True) + "\n")
