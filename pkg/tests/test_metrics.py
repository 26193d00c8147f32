import pytest
from hypothesis import given
from hypothesis import strategies as st

from semfuzz import metrics, rules
from semfuzz.metrics import (
    MetricReport, _words, jaccard, match_rule, score_rules,
)


def _rule(rule_id="r-0", protocol="DNS", message_type="DNS Response",
          field="answer[*]", construction="cache only matching answers"):
    return rules.SemanticRule(
        rule_id=rule_id, protocol=protocol, message_type=message_type,
        field=field,
        construction=rules.RoleRule("server", construction),
        processing=rules.RoleRule("client", "p"))


def _truth(protocol="DNS", message_type="DNS Response", field="answer[*]",
           construction="cache only matching answers"):
    return {"protocol": protocol, "message_type": message_type,
            "field": field, "construction_content": construction}


class TestJaccard:
    def test_identical(self):
        w = _words("cache answers")
        assert jaccard(w, w) == 1.0

    def test_disjoint(self):
        assert jaccard({"alpha", "beta"}, {"gamma", "delta"}) == 0.0

    def test_both_empty(self):
        assert jaccard(set(), set()) == 1.0

    def test_partial_overlap(self):
        # {a,b,c} vs {b,c,d}: 2 shared of 4 total
        assert jaccard({"a", "b", "c"}, {"b", "c", "d"}) == pytest.approx(0.5)

    def test_words_folds_case_and_keeps_path_chars(self):
        assert _words("Cache  ANSWER[*] now") == {"cache", "answer[*]", "now"}


class TestMatchRule:
    def test_exact_match(self):
        assert match_rule(_rule(), _truth())

    def test_protocol_must_match_exactly(self):
        assert not match_rule(_rule(protocol="DNS"), _truth(protocol="HTTP1"))

    def test_type_and_field_folded(self):
        a = _rule(message_type="dns  response", field="ANSWER[*]")
        assert match_rule(a, _truth())

    def test_construction_below_threshold_rejected(self):
        a = _rule(construction="one two three four five six seven eight")
        t = _truth(construction="one nine ten eleven twelve thirteen fourteen")
        assert jaccard(_words(a.construction.content),
                       _words(t["construction_content"])) < 0.5
        assert not match_rule(a, t)

    def test_construction_at_threshold_accepted(self):
        a = _rule(construction="a b c d")
        t = _truth(construction="c d e f")
        assert not match_rule(a, t)          # 2/6 < 0.5
        t2 = _truth(construction="a b c d e f g h")
        assert match_rule(_rule(construction="a b c d e f g h"), t2)


class TestMetricReport:
    def test_hand_computed_scores(self):
        r = MetricReport(true_positives=4, false_positives=1, false_negatives=2)
        assert r.precision == pytest.approx(4 / 5, abs=1e-9)
        assert r.recall == pytest.approx(4 / 6, abs=1e-9)
        assert r.f1 == pytest.approx(2 * (4 / 5) * (4 / 6) / ((4 / 5) + (4 / 6)),
                                     abs=1e-9)

    def test_zero_denominators(self):
        r = MetricReport(0, 0, 0)
        assert r.precision == 0.0
        assert r.recall == 0.0
        assert r.f1 == 0.0

    def test_json_shape(self):
        doc = MetricReport(1, 1, 0).to_json()
        assert doc["precision"] == 0.5
        assert doc["recall"] == 1.0

    @given(tp=st.integers(0, 500), fp=st.integers(0, 500),
           fn=st.integers(0, 500))
    def test_f1_is_harmonic_mean(self, tp, fp, fn):
        r = MetricReport(tp, fp, fn)
        p, rec = r.precision, r.recall
        if p + rec == 0:
            assert r.f1 == 0.0
        else:
            assert r.f1 == pytest.approx(2 * p * rec / (p + rec), abs=1e-12)


class TestScoreRules:
    def test_greedy_one_to_one(self):
        # two extracted rules both matching one truth: only one may claim it
        report = score_rules([_rule("r-0"), _rule("r-1")], [_truth()])
        assert (report.true_positives, report.false_positives,
                report.false_negatives) == (1, 1, 0)

    def test_miss_counts_false_negative(self):
        report = score_rules([_rule()], [_truth(), _truth(field="header.flags")])
        assert report.false_negatives == 1
        assert report.true_positives == 1

    def test_empty_extraction(self):
        report = score_rules([], [_truth()])
        assert (report.true_positives, report.false_positives,
                report.false_negatives) == (0, 0, 1)


class TestScoreCases:
    def test_counts(self):
        batch = [{"valid": True}, {"valid": True}, {"valid": False},
                 {"valid": True}]
        assert metrics.score_cases(batch) == {
            "total": 4, "valid": 3, "accuracy": 0.75}

    def test_empty_rejected(self):
        with pytest.raises(metrics.EmptyBatch):
            metrics.score_cases([])
