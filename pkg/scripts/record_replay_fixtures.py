"""Author the bundled replay store under data/replay/.

Runs the real pipeline stages with a scripted binding so every recorded
fixture is keyed by the exact prompt the pipeline renders at runtime.
The responses themselves are hand-written to exercise one planted bug
per protocol fixture.
"""
import json
import pathlib
import shutil
import sys

ROOT = pathlib.Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from semfuzz import gateway, ingest, model, rules, strategies, testcases
from semfuzz.codecs import tls13
from semfuzz.messagetypes import load_message_types

STORE = ROOT / "data" / "replay"

AE_CODINGS = (" x-lz77-raw, x-huffman-stream, x-delta9, x-rle-max, "
              "x-bwt-fast, x-arith-code, x-ppm-var, x-cmix-lite")


def supported_versions_field(corpus) -> dict:
    """The seed's supported_versions extension as an action field object."""
    seed = ingest.select_seed(corpus, "ClientHello with Pre Shared Key Extension")
    names = tls13.extension_names(seed)
    idx = names.index("supported_versions")
    node = model.get(seed, f"handshake.extensions[{idx}]")
    return idx, model.node_to_json(node)


def build_script(corpus) -> dict:
    sv_idx, sv_field = supported_versions_field(corpus)

    identify = [
        ("Implementations that tolerate", []),
        ("Pre-Shared Key Extension Ordering", [{
            "protocol": "TLS 1.3",
            "message_type": "ClientHello with Pre Shared Key Extension",
            "content": ("The pre_shared_key extension MUST be the last "
                        "extension in the ClientHello; servers MUST check "
                        "that it is the last extension and otherwise fail "
                        "the handshake with an illegal_parameter alert."),
        }]),
        ("whitespace between a header field name", [{
            "protocol": "HTTP/1.1",
            "message_type": "http request with Content-Length header",
            "content": ("A sender MUST NOT generate whitespace between a "
                        "header field name and the colon; a server MUST "
                        "reject any received request containing such "
                        "whitespace with a 400 (Bad Request) status code."),
        }]),
        ("number of content codings", [{
            "protocol": "HTTP/1.1",
            "message_type": "http request with Accept-Encoding header",
            "content": ("A server that does not support any of the content "
                        "codings listed in Accept-Encoding MUST NOT treat "
                        "the request as an error; it responds normally."),
        }]),
        ("answer section that correspond", [{
            "protocol": "DNS",
            "message_type": "DNS Response",
            "content": ("A name server MUST only place resource records in "
                        "the answer section that correspond to the queried "
                        "domain name; a resolver MUST NOT cache answer "
                        "records for names it did not query."),
        }]),
    ]

    complete = [
        ("MUST check that it is the last extension", {
            "field": "handshake.extensions[*].pre_shared_key",
            "construction": {
                "role": "client",
                "content": ("the pre_shared_key extension must be the last "
                            "extension in the ClientHello extension list"),
                "inferred": False},
            "processing": {
                "role": "server",
                "content": ("abort the handshake with an illegal_parameter "
                            "alert when pre_shared_key is not the last "
                            "extension"),
                "inferred": False},
        }),
        ("400 (Bad Request) status code", {
            "field": "headers.Content-Length",
            "construction": {
                "role": "client",
                "content": ("no whitespace is allowed between the header "
                            "field name and the colon"),
                "inferred": False},
            "processing": {
                "role": "server",
                "content": "reject the request with a 400 Bad Request status",
                "inferred": False},
        }),
        ("MUST NOT treat the request as an error", {
            "field": "headers.Accept-Encoding.value",
            "construction": {
                "role": "client",
                "content": ("list content codings the client is prepared to "
                            "accept in the Accept-Encoding field value"),
                "inferred": True},
            "processing": {
                "role": "server",
                "content": ("ignore unsupported content codings and respond "
                            "normally rather than with an error"),
                "inferred": False},
        }),
        ("resolver MUST NOT cache", {
            "field": "answer[*]",
            "construction": {
                "role": "server",
                "content": ("the answer section may only carry resource "
                            "records corresponding to the queried domain "
                            "name"),
                "inferred": False},
            "processing": {
                "role": "client",
                "content": ("never cache answer records for names that were "
                            "not queried; a later query for such a name is "
                            "refused or fails"),
                "inferred": False},
        }),
    ]

    strategy = [
        ("illegal_parameter", [{
            "description": ("move the supported_versions extension after "
                            "pre_shared_key so that pre_shared_key is no "
                            "longer the last extension in "
                            "handshake.extensions"),
            "expected_feedback": "alert"}]),
        ("400 Bad Request status", [{
            "description": ("append a trailing space to the Content-Length "
                            "header field name so whitespace precedes the "
                            "colon"),
            "expected_feedback": "400 Bad Request"}]),
        ("ignore unsupported content codings", [{
            "description": ("replace the value of "
                            "headers.Accept-Encoding.value with a list of "
                            "eight content codings no server supports"),
            "expected_feedback": "200 OK"}]),
        ("never cache answer records", [{
            "description": ("append an answer record for an unrelated "
                            "domain name to the answer section of the DNS "
                            "Response"),
            "expected_feedback": "refused or server failure on the follow-up "
                                 "query"}]),
    ]

    evil_answer = {
        "name": "answer",
        "value": {"kind": "composite", "children": [
            {"name": "name", "value": {"kind": "text", "text": "evil.example"}},
            {"name": "type", "value": {"kind": "uint", "value": 1, "bits": 16}},
            {"name": "class", "value": {"kind": "uint", "value": 1, "bits": 16}},
            {"name": "ttl", "value": {"kind": "uint", "value": 300, "bits": 32}},
            {"name": "rdlength", "value": {"kind": "uint", "value": 0, "bits": 16},
             "derived": True},
            {"name": "rdata", "value": {"kind": "bytes", "hex": "0a060606"}},
        ]},
    }

    action = [
        ("move the supported_versions extension", [
            {"action": "remove", "target": f"handshake.extensions[{sv_idx}]"},
            {"action": "add", "target_parent": "handshake", "position": None,
             "field": sv_field},
        ]),
        ("append a trailing space", [
            {"action": "update", "target": "headers.Content-Length.name",
             "value": {"kind": "text", "text": "Content-Length "}},
        ]),
        ("eight content codings", [
            {"action": "update", "target": "headers.Accept-Encoding.value",
             "value": {"kind": "text", "text": AE_CODINGS}},
        ]),
        ("append an answer record", [
            {"action": "add", "target_parent": "", "position": None,
             "field": evil_answer},
        ]),
    ]

    return {"spec_identify": identify, "rule_complete": complete,
            "strategy_gen": strategy, "action_gen": action}


class ScriptedBinding:
    kind = "scripted"

    def __init__(self, script, store):
        self.script = script
        self.store = store
        self.recorded = 0

    def complete(self, prompt, req):
        for marker, payload in self.script[req.template_id]:
            if marker in prompt:
                response = json.dumps(payload, indent=1)
                gateway.save_fixture(self.store, prompt, response,
                                     model="scripted")
                self.recorded += 1
                return response
        raise RuntimeError(f"no scripted response for {req.template_id} "
                           f"prompt:\n{prompt[:400]}")


def main():
    if STORE.exists():
        shutil.rmtree(STORE)
    types = load_message_types()
    type_list = [t for ts in types.values() for t in ts]
    corpus = ingest.load_seed_dir(ROOT / "data" / "seeds", type_list)
    binding = ScriptedBinding(build_script(corpus), STORE)

    doc = (ROOT / "data" / "rfc" / "mini_rfc.txt").read_text()
    rules_payload = rules.build_rules(doc, types, corpus, binding,
                                      rfc_id="mini_rfc.txt")
    rule_list = rules.load_rules_file(rules_payload)
    assert len(rule_list) == 4, rules_payload
    assert not rules_payload["skipped"], rules_payload["skipped"]

    strategies_payload = strategies.gen_all(rule_list, binding)
    strategy_list = strategies.load_strategies_file(strategies_payload)
    assert len(strategy_list) == 4, strategies_payload

    result = testcases.gen_cases(strategy_list, corpus, binding)
    bad = [(c.case_id, c.error) for c in result["cases"] if not c.valid]
    assert not bad, bad
    assert result["accuracy"] == 1.0

    print(f"recorded {binding.recorded} fixtures into {STORE}")
    for c in result["cases"]:
        print(c.case_id, c.protocol, c.message_type, c.expected.value,
              len(c.wire), "bytes")


if __name__ == "__main__":
    main()
