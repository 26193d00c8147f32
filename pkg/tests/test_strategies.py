import json

import pytest

from semfuzz import rules, strategies
from semfuzz.gateway import ReplayBinding, SchemaViolation
from semfuzz.strategies import FeedbackClass, normalize_feedback

from conftest import GOLDEN_DIR, REPLAY_STORE


class TestNormalizeFeedback:
    @pytest.mark.parametrize("phrase", [
        "alert", "the server rejects the message", "no response",
        "connection reset", "404 Not Found", "500", "NXDOMAIN",
        "handshake failure", "refused or server failure",
    ])
    def test_error_phrases(self, phrase):
        assert normalize_feedback(phrase) is FeedbackClass.ERROR

    @pytest.mark.parametrize("phrase", [
        "200 OK", "handshake proceeds", "the request is accepted",
        "normal response", "answer for the queried domain", "2xx",
    ])
    def test_normal_phrases(self, phrase):
        assert normalize_feedback(phrase) is FeedbackClass.NORMAL

    def test_status_code_beats_normal_wording(self):
        # a 4xx anywhere is decisive even if the phrase sounds positive
        assert normalize_feedback("processes it and returns 403") is FeedbackClass.ERROR

    def test_unmappable_rejected(self):
        with pytest.raises(SchemaViolation):
            normalize_feedback("perhaps something happens")


class _ListBinding:
    kind = "test"

    def __init__(self, items):
        self.items = items

    def complete(self, prompt, req):
        return json.dumps(self.items)


def _rule(rule_id="r-0000"):
    return rules.SemanticRule(
        rule_id=rule_id, protocol="DNS", message_type="DNS Response",
        field="answer[*]",
        construction=rules.RoleRule("server", "c"),
        processing=rules.RoleRule("client", "p"))


class TestGenStrategies:
    def test_ids_are_rule_scoped(self):
        binding = _ListBinding([
            {"description": "d1", "expected_feedback": "alert"},
            {"description": "d2", "expected_feedback": "200 OK"},
        ])
        out = strategies.gen_strategies(_rule(), binding)
        assert [s.strategy_id for s in out] == ["r-0000-s00", "r-0000-s01"]
        assert out[0].expected is FeedbackClass.ERROR
        assert out[1].expected is FeedbackClass.NORMAL

    def test_cap_applies(self):
        binding = _ListBinding([
            {"description": f"d{i}", "expected_feedback": "alert"}
            for i in range(9)])
        out = strategies.gen_strategies(_rule(), binding, cap=5)
        assert len(out) == 5

    def test_gen_all_skips_failing_rules(self):
        binding = _ListBinding([{"description": "d", "expected_feedback": "hmm"}])
        payload = strategies.gen_all([_rule()], binding)
        assert payload["strategies"] == []
        assert payload["skipped"][0]["rule_id"] == "r-0000"

    def test_replay_matches_golden(self):
        golden_rules = rules.load_rules_file(
            json.loads((GOLDEN_DIR / "rules.json").read_text()))
        payload = strategies.gen_all(golden_rules, ReplayBinding(REPLAY_STORE))
        golden = json.loads((GOLDEN_DIR / "strategies.json").read_text())
        assert payload["strategies"] == golden["strategies"]

    def test_strategy_json_round_trip(self):
        golden = json.loads((GOLDEN_DIR / "strategies.json").read_text())
        for obj in golden["strategies"]:
            assert strategies.MutationStrategy.from_json(obj).to_json() == obj
