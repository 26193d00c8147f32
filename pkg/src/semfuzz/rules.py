"""Structured rule construction from RFC text.

Pipeline: clean the document down to its body, split into
chapter-pathed paragraphs, identify specification requirements per
paragraph, then complete each requirement into a semantic rule with a
construction side (how the message must be built) and a processing side
(how the receiver must react).
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, field

from . import gateway
from .gateway import ChatRequest, SchemaViolation
from .ingest import NoSeedForType, SeedCorpus, select_seed
from .messagetypes import protocol_of
from .model import field_paths

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_HEADING_RE = re.compile(r"^(\d+(?:\.\d+)*)\.?\s+\S")
_TOC_RE = re.compile(r"^\s*table of contents\s*$", re.IGNORECASE)
_REFERENCES_RE = re.compile(r"^\s*(?:\d+\.?\s+)?(?:normative\s+)?references\s*$",
                            re.IGNORECASE)
_PAGE_TAIL_RE = re.compile(r"\.{2,}\s*\d+\s*$|\s\d+\s*$")
_FOOTER_RE = re.compile(r"\[Page \d+\]\s*$")
_HEADER_RE = re.compile(r"^RFC \d+\s+.*\s+\w+ \d{4}\s*$")


@dataclass(frozen=True)
class RfcParagraph:
    chapter_path: tuple[str, ...]
    text: str


@dataclass(frozen=True)
class SpecificationRequirement:
    protocol: str       # display name as stated by the model ("TLS 1.3")
    message_type: str
    content: str
    rfc_id: str = ""
    chapter_path: tuple[str, ...] = ()


@dataclass(frozen=True)
class RoleRule:
    role: str           # "client" | "server"
    content: str
    inferred: bool = False


@dataclass(frozen=True)
class SemanticRule:
    rule_id: str
    protocol: str       # internal protocol id (DNS | HTTP1 | TLS13 | IPV6)
    message_type: str
    field: str
    construction: RoleRule
    processing: RoleRule
    provenance: dict = field(default_factory=dict)
    testable: bool = True

    def to_json(self) -> dict:
        d = asdict(self)
        d["provenance"] = dict(self.provenance)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SemanticRule":
        return cls(
            rule_id=d["rule_id"], protocol=d["protocol"],
            message_type=d["message_type"], field=d["field"],
            construction=RoleRule(**d["construction"]),
            processing=RoleRule(**d["processing"]),
            provenance=d.get("provenance", {}),
            testable=d.get("testable", True),
        )


# ---------------------------------------------------------------------------
# Document preprocessing


def clean_document(rfc_text: str) -> tuple[str, list[str]]:
    """Body between the table of contents and the References heading.

    Returns (body, warnings).  When a boundary marker is missing the full
    text is kept and a warning recorded.
    """
    warnings: list[str] = []
    lines = [ln for ln in rfc_text.replace("\f", "\n").splitlines()
             if not _FOOTER_RE.search(ln) and not _HEADER_RE.match(ln)]

    start = 0
    toc_at = next((i for i, ln in enumerate(lines) if _TOC_RE.match(ln)), None)
    if toc_at is None:
        warnings.append("no table-of-contents marker; keeping full text")
    else:
        for i in range(toc_at + 1, len(lines)):
            ln = lines[i]
            if _HEADING_RE.match(ln.strip()) and not _PAGE_TAIL_RE.search(ln):
                start = i
                break
        else:
            warnings.append("table of contents never ends; keeping full text")
            start = toc_at + 1

    end = len(lines)
    ref_at = next((i for i in range(start, len(lines))
                   if _REFERENCES_RE.match(lines[i])), None)
    if ref_at is None:
        warnings.append("no References heading; keeping text to the end")
    else:
        end = ref_at

    return "\n".join(lines[start:end]), warnings


def _heading_depth(number: str) -> int:
    return number.count(".") + 1


def split_paragraphs(body: str) -> list[RfcParagraph]:
    """Blank-line paragraphs, each prefixed with its chapter-title stack."""
    stack: list[tuple[int, str]] = []
    out: list[RfcParagraph] = []
    for block in re.split(r"\n\s*\n", body):
        block = block.strip("\n")
        if not block.strip():
            continue
        lines = block.splitlines()
        while lines:
            m = _HEADING_RE.match(lines[0].strip())
            if not m:
                break
            depth = _heading_depth(m.group(1))
            while stack and stack[-1][0] >= depth:
                stack.pop()
            stack.append((depth, lines[0].strip()))
            lines = lines[1:]
        text = "\n".join(lines).strip()
        if text:
            out.append(RfcParagraph(tuple(t for _, t in stack), text))
    return out


# ---------------------------------------------------------------------------
# LLM stages


def identify_specs(para: RfcParagraph, type_list: list[str], binding,
                   rfc_id: str = "") -> list[SpecificationRequirement]:
    req = ChatRequest("spec_identify", {
        "text": json.dumps({" > ".join(para.chapter_path): para.text}, indent=1),
        "message_type_list": type_list,
    })
    items = gateway.complete_structured(req, binding, "specification_requirements")
    out = []
    for item in items:
        if item["message_type"] not in type_list:
            log.warning("dropping requirement with unlisted type %r",
                        item["message_type"])
            continue
        out.append(SpecificationRequirement(
            protocol=item["protocol"], message_type=item["message_type"],
            content=item["content"], rfc_id=rfc_id,
            chapter_path=para.chapter_path))
    return out


def complete_rule(req: SpecificationRequirement, fields: list[str],
                  binding, rule_id: str, protocol_id: str,
                  testable: bool = True) -> SemanticRule:
    chat = ChatRequest("rule_complete", {
        "specification_requirement": {
            "protocol": req.protocol,
            "message_type": req.message_type,
            "content": req.content,
        },
        "message_structure": fields,
    })
    obj = gateway.complete_structured(chat, binding, "semantic_rule")
    f = obj["field"]
    field_in_seed = _field_matches(f, fields)
    if fields and not field_in_seed:
        log.warning("rule %s: field %r not found among %d seed paths",
                    rule_id, f, len(fields))
    construction = RoleRule(obj["construction"]["role"], obj["construction"]["content"],
                            bool(obj["construction"].get("inferred", False)))
    processing = RoleRule(obj["processing"]["role"], obj["processing"]["content"],
                          bool(obj["processing"].get("inferred", False)))
    if construction.role == processing.role:
        raise SchemaViolation(
            f"rule {rule_id}: construction and processing share role "
            f"{construction.role!r}")
    return SemanticRule(
        rule_id=rule_id, protocol=protocol_id, message_type=req.message_type,
        field=f, construction=construction, processing=processing,
        provenance={
            "rfc_id": req.rfc_id,
            "chapter_path": list(req.chapter_path),
            "source_protocol": req.protocol,
            "requirement": req.content,
            "field_in_seed": field_in_seed,
        },
        testable=testable,
    )


def _field_matches(f: str, fields: list[str]) -> bool:
    base = re.sub(r"\[\*\]", "", f)
    for candidate in fields:
        norm = re.sub(r"\[\d+\]", "", candidate)
        if base == norm or base.startswith(norm + ".") or norm.startswith(base + "."):
            return True
    return False


def build_rules(doc_text: str, types: dict[str, list[str]], corpus: SeedCorpus,
                binding, rfc_id: str = "") -> dict:
    """Run the whole constructor; returns the rules-file payload."""
    body, warnings = clean_document(doc_text)
    paras = split_paragraphs(body)
    type_list = [t for ts in types.values() for t in ts]

    requirements: list[SpecificationRequirement] = []
    skipped: list[dict] = []
    for i, para in enumerate(paras):
        try:
            requirements.extend(identify_specs(para, type_list, binding, rfc_id))
        except SchemaViolation as e:
            skipped.append({"stage": "identify", "paragraph": i, "reason": str(e)})
        except gateway.GatewayError as e:
            skipped.append({"stage": "identify", "paragraph": i, "reason": str(e)})

    rules: list[SemanticRule] = []
    for i, req in enumerate(requirements):
        rule_id = f"r-{i:04d}"
        protocol_id = protocol_of(req.message_type, types) or "UNKNOWN"
        try:
            seed = select_seed(corpus, req.message_type)
            fields = [p.render() for p in field_paths(seed)]
            testable = True
        except NoSeedForType:
            fields = []
            testable = False
        try:
            rules.append(complete_rule(req, fields, binding, rule_id,
                                       protocol_id, testable=testable))
        except (SchemaViolation, gateway.GatewayError) as e:
            skipped.append({"stage": "complete", "rule_id": rule_id, "reason": str(e)})

    return {
        "schema_version": SCHEMA_VERSION,
        "warnings": warnings,
        "paragraphs_total": len(paras),
        "skipped": skipped,
        "rules": [r.to_json() for r in rules],
    }


def load_rules_file(doc: dict) -> list[SemanticRule]:
    return [SemanticRule.from_json(r) for r in doc["rules"]]
