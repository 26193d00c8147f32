import dataclasses
import json

import pytest

from semfuzz import gateway
from semfuzz.gateway import (
    ChatRequest, FixtureMiss, MissingVariable, ReplayBinding, SchemaViolation,
    TransportError,
)


class TestRender:
    def test_variables_substituted(self):
        out = gateway.render("spec_identify", {
            "text": "BODY-MARKER", "message_type_list": ["DNS Query"]})
        assert "BODY-MARKER" in out
        assert '"DNS Query"' in out

    def test_unbound_placeholder_rejected(self):
        with pytest.raises(MissingVariable):
            gateway.render("spec_identify", {"text": "x"})

    def test_unknown_template_rejected(self):
        with pytest.raises(MissingVariable):
            gateway.render("nope", {})

    def test_all_templates_render(self):
        vars_by_template = {
            "spec_identify": {"text": "t", "message_type_list": []},
            "rule_complete": {"specification_requirement": {},
                              "message_structure": []},
            "strategy_gen": {"semantic_rule": {}},
            "action_gen": {"mutation_strategy": {}, "message_structure": []},
        }
        for tid in gateway.TEMPLATE_IDS:
            assert gateway.render(tid, vars_by_template[tid])

    def test_prompt_key_is_sha256(self):
        import hashlib
        assert gateway.prompt_key("abc") == hashlib.sha256(b"abc").hexdigest()


class TestSamplingDefaults:
    def test_chat_request_defaults(self):
        req = ChatRequest("spec_identify", {})
        assert req.temperature == 0.5
        assert req.top_p == 0.1

    def test_remote_payload_carries_defaults(self, monkeypatch):
        captured = {}

        class FakeResponse:
            status_code = 200

            def json(self):
                return {"choices": [{"message": {"content": "[]"}}]}

        def fake_post(url, json=None, headers=None, timeout=None):
            captured["payload"] = json
            return FakeResponse()

        import requests
        monkeypatch.setattr(requests, "post", fake_post)
        binding = gateway.RemoteBinding("http://example.invalid/v1", "m")
        req = ChatRequest("spec_identify", {"text": "x", "message_type_list": []})
        gateway.complete(req, binding)
        assert captured["payload"]["temperature"] == 0.5
        assert captured["payload"]["top_p"] == 0.1

    def test_remote_payload_honors_override(self, monkeypatch):
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
        req = ChatRequest("spec_identify", {"text": "x", "message_type_list": []},
                          temperature=0.9, top_p=0.7)
        gateway.complete(req, binding)
        assert captured["payload"]["temperature"] == 0.9
        assert captured["payload"]["top_p"] == 0.7


class TestReplay:
    def test_round_trip_through_store(self, tmp_path):
        gateway.save_fixture(tmp_path, "the prompt", "the response")
        binding = ReplayBinding(tmp_path)
        req = ChatRequest("spec_identify", {})
        assert binding.complete("the prompt", req) == "the response"

    def test_miss_raises(self, tmp_path):
        with pytest.raises(FixtureMiss):
            ReplayBinding(tmp_path).complete("unseen", ChatRequest("spec_identify", {}))

    def test_fixture_file_shape(self, tmp_path):
        path = gateway.save_fixture(tmp_path, "p", "r", model="m",
                                    temperature=0.3, top_p=0.2)
        doc = json.loads(path.read_text())
        assert doc == {"prompt": "p", "response": "r", "model": "m",
                       "sampling": {"temperature": 0.3, "top_p": 0.2}}
        assert path.name == gateway.prompt_key("p") + ".json"

    def test_replay_is_deterministic(self, tmp_path):
        gateway.save_fixture(tmp_path, "p", "r1")
        binding = ReplayBinding(tmp_path)
        req = ChatRequest("spec_identify", {})
        assert binding.complete("p", req) == binding.complete("p", req)


class TestRetries:
    def test_transport_error_after_retries(self, monkeypatch):
        calls = []

        class Fail:
            status_code = 503

            def json(self):
                return {}

        import requests
        monkeypatch.setattr(requests, "post",
                            lambda *a, **k: calls.append(1) or Fail())
        binding = gateway.RemoteBinding("http://x.invalid", "m",
                                        max_retries=2, backoff_s=0.0)
        with pytest.raises(TransportError):
            binding.complete("p", ChatRequest("spec_identify", {}))
        assert len(calls) == 3

    def test_client_error_not_retried(self, monkeypatch):
        calls = []

        class Fail:
            status_code = 401

            def json(self):
                return {}

        import requests
        monkeypatch.setattr(requests, "post",
                            lambda *a, **k: calls.append(1) or Fail())
        binding = gateway.RemoteBinding("http://x.invalid", "m",
                                        max_retries=3, backoff_s=0.0)
        with pytest.raises(TransportError):
            binding.complete("p", ChatRequest("spec_identify", {}))
        assert len(calls) == 1


class TestStructuredParsing:
    def test_fenced_json(self):
        raw = "Here you go:\n```json\n[{\"description\": \"d\", \"expected_feedback\": \"alert\"}]\n```"
        out = gateway.parse_structured(raw, "mutation_strategies")
        assert out[0]["description"] == "d"

    def test_prose_wrapped_json(self):
        raw = "The answer is [] as there are no requirements."
        assert gateway.parse_structured(raw, "specification_requirements") == []

    def test_no_json_rejected(self):
        with pytest.raises(SchemaViolation):
            gateway.parse_structured("no structure here", "specification_requirements")

    def test_schema_violation_names_location(self):
        with pytest.raises(SchemaViolation) as e:
            gateway.parse_structured('[{"description": "d"}]', "mutation_strategies")
        assert "mutation_strategies" in str(e.value)

    def test_corrective_reprompt_used_once(self):
        class FlakyBinding:
            kind = "test"

            def __init__(self):
                self.calls = 0

            def complete(self, prompt, req):
                self.calls += 1
                if self.calls == 1:
                    return "not json"
                assert "rejected" in prompt
                return "[]"

        binding = FlakyBinding()
        req = ChatRequest("spec_identify", {"text": "x", "message_type_list": []})
        assert gateway.complete_structured(req, binding,
                                           "specification_requirements") == []
        assert binding.calls == 2

    def test_corrective_reprompt_failure_propagates(self):
        class Broken:
            kind = "test"

            def complete(self, prompt, req):
                return "still not json"

        req = ChatRequest("spec_identify", {"text": "x", "message_type_list": []})
        with pytest.raises(SchemaViolation):
            gateway.complete_structured(req, Broken(), "specification_requirements")


class TestBoundedMap:
    def test_preserves_order(self):
        assert gateway.bounded_map(lambda x: x * 2, [3, 1, 2], 4) == [6, 2, 4]

    def test_sequential_when_single_worker(self):
        assert gateway.bounded_map(lambda x: x + 1, [1, 2], 1) == [2, 3]
