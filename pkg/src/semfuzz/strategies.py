"""Mutation strategies: rule violations with a two-class expected response."""
from __future__ import annotations

import logging
import re
from dataclasses import asdict, dataclass
from enum import Enum

from . import gateway
from .gateway import ChatRequest, SchemaViolation
from .rules import SemanticRule

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_STRATEGY_CAP = 5


class FeedbackClass(str, Enum):
    NORMAL = "Normal"
    ERROR = "Error"


# Free-text expectations from the model collapse onto the two classes.
_ERROR_PHRASES = (
    "error", "alert", "reject", "refus", "no response", "no answer",
    "not respond", "drop", "close the connection", "reset", "nxdomain",
    "servfail", "abort", "terminate", "fail",
)
_NORMAL_PHRASES = (
    "normal", "accept", "200", "ok", "proceed", "succe", "handshake proceeds",
    "continues", "serverhello", "answer", "2xx", "process",
)

_STATUS_RE = re.compile(r"\b[45]\d\d\b")


def normalize_feedback(phrase: str) -> FeedbackClass:
    p = phrase.strip().lower()
    if _STATUS_RE.search(p):
        return FeedbackClass.ERROR
    for needle in _ERROR_PHRASES:
        if needle in p:
            return FeedbackClass.ERROR
    for needle in _NORMAL_PHRASES:
        if needle in p:
            return FeedbackClass.NORMAL
    raise SchemaViolation(f"expected_feedback {phrase!r} maps to neither class")


@dataclass(frozen=True)
class MutationStrategy:
    strategy_id: str
    rule_id: str
    protocol: str
    message_type: str
    field: str
    description: str
    expected: FeedbackClass

    def to_json(self) -> dict:
        d = asdict(self)
        d["expected"] = self.expected.value
        return d

    @classmethod
    def from_json(cls, d: dict) -> "MutationStrategy":
        return cls(
            strategy_id=d["strategy_id"], rule_id=d["rule_id"],
            protocol=d["protocol"], message_type=d["message_type"],
            field=d["field"], description=d["description"],
            expected=FeedbackClass(d["expected"]),
        )


def gen_strategies(rule: SemanticRule, binding,
                   cap: int = DEFAULT_STRATEGY_CAP) -> list[MutationStrategy]:
    req = ChatRequest("strategy_gen", {
        "semantic_rule": {
            "protocol": rule.protocol,
            "message_type": rule.message_type,
            "field": rule.field,
            "construction": asdict(rule.construction),
            "processing": asdict(rule.processing),
        },
    })
    items = gateway.complete_structured(req, binding, "mutation_strategies")
    if len(items) > cap:
        log.warning("rule %s produced %d strategies, capping at %d",
                    rule.rule_id, len(items), cap)
        items = items[:cap]
    out = []
    for i, item in enumerate(items):
        out.append(MutationStrategy(
            strategy_id=f"{rule.rule_id}-s{i:02d}",
            rule_id=rule.rule_id,
            protocol=rule.protocol,
            message_type=rule.message_type,
            field=rule.field,
            description=item["description"],
            expected=normalize_feedback(item["expected_feedback"]),
        ))
    return out


def gen_all(rules: list[SemanticRule], binding,
            cap: int = DEFAULT_STRATEGY_CAP) -> dict:
    strategies: list[MutationStrategy] = []
    skipped: list[dict] = []
    for rule in rules:
        try:
            strategies.extend(gen_strategies(rule, binding, cap=cap))
        except (SchemaViolation, gateway.GatewayError) as e:
            skipped.append({"rule_id": rule.rule_id, "reason": str(e)})
    return {
        "schema_version": SCHEMA_VERSION,
        "skipped": skipped,
        "strategies": [s.to_json() for s in strategies],
    }


def load_strategies_file(doc: dict) -> list[MutationStrategy]:
    return [MutationStrategy.from_json(s) for s in doc["strategies"]]
