"""End-to-end acceptance checks.

Each test function is one criterion; its pass/fail line in `pytest -v`
is the acceptance record.  Timing bounds are asserted inside the tests.
"""
import filecmp
import json
import os
import random
import time
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from semfuzz import campaign, cli, codecs, fixtures, gateway, ingest, metrics
from semfuzz.campaign import (
    OutcomeBytes, OutcomeRefused, OutcomeReset, OutcomeTimeout, classify,
    verify,
)
from semfuzz.strategies import FeedbackClass
from semfuzz.testcases import ActionSequence, apply_actions

from conftest import DERIVED_ORACLES, GOLDEN_DIR, REPO, random_sequence

import test_testcases


@pytest.fixture(scope="module")
def pipeline_runs(tmp_path_factory):
    """Run the replay-driven pipeline twice into fresh directories."""
    cwd = os.getcwd()
    os.chdir(REPO)
    try:
        runs = []
        for name in ("run1", "run2"):
            out = tmp_path_factory.mktemp(name)
            cfg = cli.load_run_config("configs/replay.json", {})
            start = time.monotonic()
            summary = cli.run_pipeline(cfg, out)
            runs.append((out, summary, time.monotonic() - start))
    finally:
        os.chdir(cwd)
    return runs


def _artifact_files(root: Path) -> list[str]:
    return sorted(str(p.relative_to(root)) for p in root.rglob("*")
                  if p.is_file())


def test_criterion_1_seed_round_trip_volume_and_speed(corpus):
    start = time.monotonic()
    by_protocol = {"DNS": 0, "HTTP1": 0, "TLS13": 0}
    for entry in corpus.entries:
        msg = codecs.decode(entry.seed.protocol, entry.message_type, entry.wire)
        assert codecs.encode(msg) == entry.wire
        by_protocol[entry.seed.protocol] += 1
    elapsed = time.monotonic() - start
    assert by_protocol["DNS"] >= 10
    assert by_protocol["HTTP1"] >= 5
    assert by_protocol["TLS13"] >= 5
    assert elapsed < 1.0, f"round-trips took {elapsed:.2f}s"


def test_criterion_2_thousand_random_mutations_per_protocol(corpus):
    rng = random.Random(20260826)
    start = time.monotonic()
    for protocol in ("DNS", "HTTP1", "TLS13"):
        seeds = [e.seed for e in corpus.entries if e.seed.protocol == protocol]
        strategy = test_testcases._strategy(message_type="any")
        for i in range(1000):
            seed = seeds[i % len(seeds)]
            actions = random_sequence(rng, seed)
            seq = ActionSequence(f"s-{i}", tuple(actions))
            case = apply_actions(seed, seq, strategy, f"c-{i}")
            assert case.valid, f"{protocol} seq {i}: {case.error}"
            decoded = codecs.decode(protocol, seed.message_type, case.wire)
            assert decoded.root == case.message.root
            DERIVED_ORACLES[protocol](case.message, case.wire)
    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"3000 mutations took {elapsed:.2f}s"


def test_criterion_3_planted_bugs_found_and_control_clean(pipeline_runs):
    out, summary, elapsed = pipeline_runs[0]
    assert summary["buggy"]["potential_vulnerabilities"] == 4
    assert summary["control"]["potential_vulnerabilities"] == 0
    assert summary["control"]["consistent"] == summary["control"]["total"]
    findings = [json.loads(l) for l in
                (out / "findings.jsonl").read_text().splitlines()]
    flagged = {v["case_id"] for v in findings
               if v["status"] == "PotentialVulnerability"}
    assert len(flagged) == 4
    protocols = {json.loads((out / "cases" / f"{c}.json").read_text())["protocol"]
                 for c in flagged}
    assert protocols == {"DNS", "HTTP1", "TLS13"}
    assert elapsed < 60.0, f"pipeline took {elapsed:.2f}s"


CLASSIFY_TABLE = [
    # every protocol maps transport-level failures to Error
    ("DNS", OutcomeTimeout(2000), None, FeedbackClass.ERROR),
    ("DNS", OutcomeRefused(), None, FeedbackClass.ERROR),
    ("DNS", OutcomeReset(), None, FeedbackClass.ERROR),
    ("HTTP1", OutcomeTimeout(2000), None, FeedbackClass.ERROR),
    ("HTTP1", OutcomeRefused(), None, FeedbackClass.ERROR),
    ("HTTP1", OutcomeReset(), None, FeedbackClass.ERROR),
    ("TLS13", OutcomeTimeout(2000), None, FeedbackClass.ERROR),
    ("TLS13", OutcomeRefused(), None, FeedbackClass.ERROR),
    ("TLS13", OutcomeReset(), None, FeedbackClass.ERROR),
    # DNS payloads
    ("DNS", "dns-clean-answer", None, FeedbackClass.NORMAL),
    ("DNS", "dns-clean-answer", {"question": "other.example"},
     FeedbackClass.ERROR),
    ("DNS", "dns-servfail", None, FeedbackClass.ERROR),
    ("DNS", "dns-nxdomain", None, FeedbackClass.ERROR),
    ("DNS", "dns-no-answers", None, FeedbackClass.ERROR),
    ("DNS", OutcomeBytes(b"\x00"), None, FeedbackClass.ERROR),
    # TLS payloads
    ("TLS13", "tls-server-hello", None, FeedbackClass.NORMAL),
    ("TLS13", "tls-alert", None, FeedbackClass.ERROR),
    ("TLS13", OutcomeBytes(b"\x17\x03\x03\x00\x01\x00"), None,
     FeedbackClass.ERROR),
    ("TLS13", OutcomeBytes(b"\x16"), None, FeedbackClass.ERROR),
    # HTTP payloads
    ("HTTP1", "http-200", None, FeedbackClass.NORMAL),
    ("HTTP1", "http-301", None, FeedbackClass.NORMAL),
    ("HTTP1", "http-399", None, FeedbackClass.NORMAL),
    ("HTTP1", "http-400", None, FeedbackClass.ERROR),
    ("HTTP1", "http-404", None, FeedbackClass.ERROR),
    ("HTTP1", "http-500", None, FeedbackClass.ERROR),
    ("HTTP1", OutcomeBytes(b"garbage bytes"), None, FeedbackClass.ERROR),
]


def _materialize(token):
    if not isinstance(token, str):
        return token
    query = campaign.build_dns_query(7, "www.example.com")
    rr = {"name": "www.example.com", "type": 1, "class": 1, "ttl": 60,
          "rdata": b"\x5d\xb8\xd8\x22"}
    if token == "dns-clean-answer":
        return OutcomeBytes(fixtures._dns_reply(query, "www.example.com", 1,
                                                0x8180, [rr]))
    if token == "dns-servfail":
        return OutcomeBytes(fixtures._dns_reply(query, "www.example.com", 1,
                                                0x8182, []))
    if token == "dns-nxdomain":
        return OutcomeBytes(fixtures._dns_reply(query, "www.example.com", 1,
                                                0x8183, [rr]))
    if token == "dns-no-answers":
        return OutcomeBytes(fixtures._dns_reply(query, "www.example.com", 1,
                                                0x8180, []))
    if token == "tls-server-hello":
        return OutcomeBytes(fixtures.server_hello_bytes(b"\x01" * 4))
    if token == "tls-alert":
        return OutcomeBytes(codecs.tls13.alert_bytes(description=47))
    status = int(token.split("-")[1])
    return OutcomeBytes(
        f"HTTP/1.1 {status} X\r\nContent-Length: 0\r\n\r\n".encode())


@pytest.mark.parametrize("protocol,outcome,context,want", CLASSIFY_TABLE)
def test_criterion_4_response_classification_table(protocol, outcome, context,
                                                   want):
    got, _ = classify(protocol, _materialize(outcome), context)
    assert got is want


def test_criterion_5_verdict_truth_table():
    n, e = FeedbackClass.NORMAL, FeedbackClass.ERROR
    assert verify(n, n) == "Consistent"
    assert verify(e, e) == "Consistent"
    assert verify(n, e) == "PotentialVulnerability"
    assert verify(e, n) == "PotentialVulnerability"


def test_criterion_6_replay_pipeline_is_byte_deterministic(pipeline_runs):
    (run1, _, _), (run2, _, _) = pipeline_runs
    names = _artifact_files(GOLDEN_DIR)
    assert _artifact_files(run1) == names
    assert _artifact_files(run2) == names
    for name in names:
        assert (run1 / name).read_bytes() == (run2 / name).read_bytes(), name
        assert (run1 / name).read_bytes() == (GOLDEN_DIR / name).read_bytes(), name


def test_criterion_7_rule_metrics_exact_and_f1_property():
    extracted = json.loads((GOLDEN_DIR / "rules.json").read_text())
    truths = json.loads(
        (REPO / "data/benchmark/rules_truth.json").read_text())["rules"]
    from semfuzz.rules import load_rules_file
    report = metrics.score_rules(load_rules_file(extracted), truths)
    assert abs(report.precision - 1.0) < 1e-9
    assert abs(report.recall - 0.8) < 1e-9
    assert abs(report.f1 - 8 / 9) < 1e-9

    @given(tp=st.integers(0, 1000), fp=st.integers(0, 1000),
           fn=st.integers(0, 1000))
    def harmonic(tp, fp, fn):
        r = metrics.MetricReport(tp, fp, fn)
        p, rec = r.precision, r.recall
        expect = 0.0 if p + rec == 0 else 2 * p * rec / (p + rec)
        assert abs(r.f1 - expect) < 1e-12

    harmonic()


def test_criterion_8_sampling_defaults_reach_the_remote(monkeypatch):
    req = gateway.ChatRequest("spec_identify", {"text": "x",
                                                "message_type_list": []})
    assert (req.temperature, req.top_p) == (0.5, 0.1)

    captured = {}

    class FakeResponse:
        status_code = 200

        def json(self):
            return {"choices": [{"message": {"content": "[]"}}]}

    import requests
    monkeypatch.setattr(requests, "post",
                        lambda url, json=None, headers=None, timeout=None:
                        captured.update(payload=json) or FakeResponse())
    binding = gateway.RemoteBinding("http://example.invalid/v1", "m")
    gateway.complete(req, binding)
    assert captured["payload"]["temperature"] == 0.5
    assert captured["payload"]["top_p"] == 0.1

    # recorded exchanges carry the same defaults
    for path in (REPO / "data/replay").glob("*.json"):
        doc = json.loads(path.read_text())
        assert doc["sampling"] == {"temperature": 0.5, "top_p": 0.1}


def test_criterion_9_post_crash_cases_are_indeterminate(corpus):
    cases = cli.load_cases_dir(GOLDEN_DIR / "cases")
    http_cases = [c for c in cases if c.protocol == "HTTP1"]
    crash = next(c for c in http_cases if c.expected is FeedbackClass.NORMAL)
    others = [c for c in http_cases if c is not crash]
    ordered = [crash] + others + others          # crash first, then survivors
    probe_wire = next(e.wire for e in corpus.entries
                      if e.seed.protocol == "HTTP1")
    cfg = fixtures.FixtureConfig(
        "HTTP1", bugs=frozenset({fixtures.BUG_AE_CRASH}))
    with fixtures.serve(cfg) as handle:
        ep = campaign.Endpoint("127.0.0.1", handle.port)
        ccfg = campaign.CampaignConfig(timeout_ms=2000, probe=True,
                                       probe_wire=probe_wire,
                                       probe_protocol="HTTP1", workers=1)
        report = campaign.run_campaign(ordered, ep, ccfg)
    assert report.target_down_after == crash.case_id
    post_crash = report.verdicts[1:]
    assert post_crash, "no cases ran after the crash"
    for v in post_crash:
        assert v.status == "Indeterminate"
        assert v.actual == "Indeterminate"
        assert v.status != "PotentialVulnerability"
