"""Evaluation against hand-labelled ground truth.

Rule matching is deliberately loose: protocols must agree exactly,
message type and field compare after case/whitespace folding, and the
construction text only needs a word-level Jaccard overlap of at least
0.5.  Matching is greedy one-to-one in extraction order.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .rules import SemanticRule

JACCARD_THRESHOLD = 0.5


class MetricsError(Exception):
    pass


class EmptyBatch(MetricsError):
    pass


def _fold(s: str) -> str:
    return re.sub(r"\s+", " ", s.strip().lower())


def _words(s: str) -> set[str]:
    return set(re.findall(r"[a-z0-9_.\[\]*-]+", s.lower()))


def jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 1.0
    union = a | b
    return len(a & b) / len(union)


def match_rule(rule: SemanticRule, truth: dict) -> bool:
    if rule.protocol != truth["protocol"]:
        return False
    if _fold(rule.message_type) != _fold(truth["message_type"]):
        return False
    if _fold(rule.field) != _fold(truth["field"]):
        return False
    return jaccard(_words(rule.construction.content),
                   _words(truth["construction_content"])) >= JACCARD_THRESHOLD


@dataclass(frozen=True)
class MetricReport:
    true_positives: int
    false_positives: int
    false_negatives: int

    @property
    def precision(self) -> float:
        denom = self.true_positives + self.false_positives
        return self.true_positives / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.true_positives + self.false_negatives
        return self.true_positives / denom if denom else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) else 0.0

    def to_json(self) -> dict:
        return {
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def score_rules(rules: list[SemanticRule], truths: list[dict]) -> MetricReport:
    """Greedy one-to-one assignment in extraction order."""
    unmatched = list(range(len(truths)))
    tp = 0
    for rule in rules:
        hit = next((i for i in unmatched if match_rule(rule, truths[i])), None)
        if hit is not None:
            unmatched.remove(hit)
            tp += 1
    return MetricReport(
        true_positives=tp,
        false_positives=len(rules) - tp,
        false_negatives=len(unmatched),
    )


def score_cases(cases: list[dict]) -> dict:
    """Generation accuracy: share of cases that applied and encoded."""
    if not cases:
        raise EmptyBatch("no cases to score")
    valid = sum(1 for c in cases if c.get("valid"))
    return {"total": len(cases), "valid": valid, "accuracy": valid / len(cases)}
