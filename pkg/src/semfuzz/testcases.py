"""Test-case generation: strategies -> atomic action sequences -> wire bytes.

The LLM produces an ordered Add/Remove/Update sequence; a deterministic
engine applies it to the seed, repairs derived length/count fields over
the final tree (skipping any the sequence froze), and encodes.  A case
that fails to apply or encode is kept with valid=False; that is exactly
what the batch accuracy metric counts.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Optional, Union

from . import codecs, gateway, model
from .codecs.base import CodecError
from .gateway import ChatRequest, SchemaViolation
from .ingest import NoSeedForType, SeedCorpus, select_seed
from .model import FieldNode, FieldValue, Message, ModelError
from .strategies import FeedbackClass, MutationStrategy

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Add:
    target_parent: str
    position: Optional[int]
    new_field: FieldNode


@dataclass(frozen=True)
class Remove:
    target: str


@dataclass(frozen=True)
class Update:
    target: str
    new_value: Optional[FieldValue]   # None: infer during execution (derived only)
    freeze_derived: bool = False


Action = Union[Add, Remove, Update]


@dataclass(frozen=True)
class ActionSequence:
    strategy_id: str
    actions: tuple[Action, ...]

    def __post_init__(self):
        if not self.actions:
            raise ValueError("action sequence must be non-empty")


@dataclass
class TestCase:
    case_id: str
    strategy_id: str
    protocol: str
    message_type: str
    expected: FeedbackClass
    message: Optional[Message] = None
    wire: Optional[bytes] = None
    valid: bool = False
    error: str = ""
    frozen_paths: tuple[str, ...] = ()
    rule_id: str = ""


def action_from_json(obj: dict) -> Action:
    kind = obj["action"]
    if kind == "add":
        f = obj["field"]
        node = model.node_from_json(f)
        return Add(obj["target_parent"], obj.get("position"), node)
    if kind == "remove":
        return Remove(obj["target"])
    if kind == "update":
        v = obj.get("value")
        return Update(obj["target"],
                      model.value_from_json(v) if v is not None else None,
                      bool(obj.get("freeze_derived", False)))
    raise SchemaViolation(f"unknown action kind {kind!r}")


def action_to_json(a: Action) -> dict:
    if isinstance(a, Add):
        return {"action": "add", "target_parent": a.target_parent,
                "position": a.position, "field": model.node_to_json(a.new_field)}
    if isinstance(a, Remove):
        return {"action": "remove", "target": a.target}
    return {"action": "update", "target": a.target,
            "value": model.value_to_json(a.new_value) if a.new_value is not None else None,
            "freeze_derived": a.freeze_derived}


def gen_actions(strategy: MutationStrategy, field_path_list: list[str],
                binding) -> ActionSequence:
    req = ChatRequest("action_gen", {
        "mutation_strategy": {
            "message_type": strategy.message_type,
            "field": strategy.field,
            "description": strategy.description,
        },
        "message_structure": field_path_list,
    })
    items = gateway.complete_structured(req, binding, "action_sequence")
    actions = []
    known = {_normalize(p) for p in field_path_list}
    for obj in items:
        action = action_from_json(obj)
        target = action.target_parent if isinstance(action, Add) else action.target
        if target and not _target_known(target, known):
            log.warning("strategy %s: action targets unknown path %r",
                        strategy.strategy_id, target)
        actions.append(action)
    return ActionSequence(strategy.strategy_id, tuple(actions))


def _normalize(path: str) -> str:
    return re.sub(r"\[\d+\]", "", path)


def _target_known(target: str, known: set[str]) -> bool:
    norm = _normalize(target)
    return norm in known or any(norm.startswith(k + ".") or k.startswith(norm + ".")
                                for k in known)


def apply_actions(seed: Message, seq: ActionSequence, strategy: MutationStrategy,
                  case_id: str) -> TestCase:
    case = TestCase(
        case_id=case_id, strategy_id=seq.strategy_id, protocol=seed.protocol,
        message_type=seed.message_type, expected=strategy.expected,
        rule_id=strategy.rule_id,
    )
    msg = seed
    frozen: list[str] = []
    try:
        for action in seq.actions:
            if isinstance(action, Add):
                msg = model.insert_at(msg, action.target_parent, action.position,
                                      action.new_field)
            elif isinstance(action, Remove):
                msg = model.remove_at(msg, action.target)
            else:
                if action.new_value is None:
                    node = model.get(msg, action.target)
                    if not node.derived:
                        raise SchemaViolation(
                            f"update of {action.target!r} without a value is only "
                            "allowed on derived fields")
                    # value recomputed by repair below; nothing to do now
                else:
                    msg = model.update_at(msg, action.target, action.new_value)
                if action.freeze_derived:
                    frozen.append(action.target)
        msg = codecs.repair_derived(msg, freeze=frozen)
        case.message = msg
        case.wire = codecs.encode(msg, freeze=frozen)
        case.frozen_paths = tuple(frozen)
        case.valid = True
    except (ModelError, CodecError, SchemaViolation) as e:
        case.error = f"{type(e).__name__}: {e}"
        case.valid = False
    return case


def gen_cases(strategies: list[MutationStrategy], corpus: SeedCorpus,
              binding) -> dict:
    """One test case per strategy; returns the cases-manifest payload."""
    cases: list[TestCase] = []
    for i, strategy in enumerate(strategies):
        case_id = f"c-{i:04d}"
        try:
            seed = select_seed(corpus, strategy.message_type)
        except NoSeedForType as e:
            cases.append(TestCase(
                case_id=case_id, strategy_id=strategy.strategy_id,
                protocol=strategy.protocol, message_type=strategy.message_type,
                expected=strategy.expected, valid=False,
                error=f"NoSeedForType: {e}", rule_id=strategy.rule_id))
            continue
        paths = [p.render() for p in model.field_paths(seed)]
        try:
            seq = gen_actions(strategy, paths, binding)
        except (SchemaViolation, gateway.GatewayError) as e:
            cases.append(TestCase(
                case_id=case_id, strategy_id=strategy.strategy_id,
                protocol=strategy.protocol, message_type=strategy.message_type,
                expected=strategy.expected, valid=False,
                error=f"{type(e).__name__}: {e}", rule_id=strategy.rule_id))
            continue
        cases.append(apply_actions(seed, seq, strategy, case_id))
    valid = sum(1 for c in cases if c.valid)
    return {
        "schema_version": SCHEMA_VERSION,
        "accuracy": (valid / len(cases)) if cases else 0.0,
        "cases": cases,
    }


def case_record(case: TestCase, message_file: str = "", wire_file: str = "") -> dict:
    rec = {
        "case_id": case.case_id,
        "strategy_id": case.strategy_id,
        "rule_id": case.rule_id,
        "protocol": case.protocol,
        "message_type": case.message_type,
        "expected": case.expected.value,
        "valid": case.valid,
    }
    if case.error:
        rec["error"] = case.error
    if message_file:
        rec["message_file"] = message_file
    if wire_file:
        rec["wire_file"] = wire_file
    if case.frozen_paths:
        rec["frozen_paths"] = list(case.frozen_paths)
    return rec
