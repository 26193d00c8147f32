"""Seed corpus construction from offline captures.

Two sources: tshark ``-T json`` exports (with raw layer hex, i.e. the
``-x`` flag) and raw ``.bin``/``.hex`` fixture files.  Frames are always
re-decoded through our own codecs; the tshark field tree is used only to
locate the protocol payload.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import codecs
from .codecs.base import MalformedWire, load_fixture_bytes
from .model import Message


class IngestError(Exception):
    pass


class NotTsharkJson(IngestError):
    pass


class NoMatchingFrames(IngestError):
    pass


class NoSeedForType(IngestError):
    pass


@dataclass(frozen=True)
class SeedEntry:
    message_type: str
    seed: Message
    source: str           # "<file>#<frame>" or file path
    wire: bytes


@dataclass
class SeedCorpus:
    entries: list[SeedEntry] = field(default_factory=list)
    skipped: int = 0

    def types(self) -> list[str]:
        seen = []
        for e in self.entries:
            if e.message_type not in seen:
                seen.append(e.message_type)
        return seen

    def missing_types(self, type_list: list[str]) -> list[str]:
        have = set(self.types())
        return [t for t in type_list if t not in have]


_LAYER_PROTOCOLS = (("dns", "DNS"), ("tls", "TLS13"), ("http", "HTTP1"))


def _raw_layer_bytes(layers: dict, key: str) -> bytes | None:
    entry = layers.get(f"{key}_raw")
    if entry is None:
        return None
    if isinstance(entry, list):
        entry = entry[0]
    if not isinstance(entry, str):
        return None
    try:
        return bytes.fromhex(entry)
    except ValueError:
        return None


def classify_seed(msg: Message, type_list: list[str]) -> str | None:
    """First configured type this message can serve as, or None."""
    codec = codecs.get_codec(msg.protocol)
    candidates = codec.candidate_types(msg)
    for t in type_list:
        if t in candidates:
            return t
    return None


def ingest_tshark_json(doc, type_list: list[str], source: str = "<doc>") -> SeedCorpus:
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as e:
            raise NotTsharkJson(str(e)) from None
    if not isinstance(doc, list):
        raise NotTsharkJson("expected a tshark -T json frame array")
    corpus = SeedCorpus()
    for i, frame in enumerate(doc):
        layers = (frame.get("_source") or {}).get("layers") if isinstance(frame, dict) else None
        if not isinstance(layers, dict):
            raise NotTsharkJson(f"frame {i} has no _source.layers")
        matched = False
        for key, protocol in _LAYER_PROTOCOLS:
            if key not in layers:
                continue
            payload = _raw_layer_bytes(layers, key)
            if payload is None:
                continue
            try:
                msg = codecs.decode(protocol, "unknown", payload)
            except MalformedWire:
                continue
            mtype = classify_seed(msg, type_list)
            if mtype is None:
                continue
            msg = Message(msg.protocol, mtype, msg.root)
            corpus.entries.append(SeedEntry(mtype, msg, f"{source}#{i}", payload))
            matched = True
            break
        if not matched:
            corpus.skipped += 1
    if not corpus.entries:
        raise NoMatchingFrames(f"no frames matched the {len(type_list)} configured types")
    return corpus


def ingest_raw(path, protocol: str, message_type: str) -> SeedEntry:
    wire = load_fixture_bytes(path)
    msg = codecs.decode(protocol, message_type, wire)
    return SeedEntry(message_type, msg, str(path), wire)


_SUBDIR_PROTOCOLS = {"dns": "DNS", "http": "HTTP1", "tls": "TLS13"}


def load_seed_dir(directory, type_list: list[str]) -> SeedCorpus:
    """Walk a seeds directory laid out as <dir>/{dns,http,tls}/*.bin|*.hex.

    Files are visited in sorted order so seed selection is stable.
    """
    corpus = SeedCorpus()
    root = Path(directory)
    for sub, protocol in _SUBDIR_PROTOCOLS.items():
        d = root / sub
        if not d.is_dir():
            continue
        for f in sorted(d.iterdir()):
            if f.suffix not in (".bin", ".hex"):
                continue
            wire = load_fixture_bytes(f)
            msg = codecs.decode(protocol, "unknown", wire)
            mtype = classify_seed(msg, type_list)
            if mtype is None:
                corpus.skipped += 1
                continue
            msg = Message(protocol, mtype, msg.root)
            corpus.entries.append(SeedEntry(mtype, msg, str(f), wire))
    return corpus


def select_seed(corpus: SeedCorpus, message_type: str) -> Message:
    """First corpus entry serving the type; stable across runs.

    A seed can stand in for several configured types (an HTTP request
    carries many headers), so an exact label match is tried first and
    the full candidate list second.
    """
    for e in corpus.entries:
        if e.message_type == message_type:
            return e.seed
    for e in corpus.entries:
        codec = codecs.get_codec(e.seed.protocol)
        if message_type in codec.candidate_types(e.seed):
            return Message(e.seed.protocol, message_type, e.seed.root)
    raise NoSeedForType(message_type)
