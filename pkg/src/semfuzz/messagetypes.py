"""The configured message-type list L and its protocol grouping."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

# Display names used in RFC-facing prompts vs. internal protocol ids.
PROTOCOL_LABELS = {"DNS": "DNS", "IPV6": "IPv6", "TLS13": "TLS 1.3", "HTTP1": "HTTP/1.1"}


def load_message_types(path=None) -> dict[str, list[str]]:
    """protocol id -> type names; defaults to the bundled 44-type list."""
    if path is None:
        text = resources.files("semfuzz.data").joinpath("message_types.json").read_text()
    else:
        text = Path(path).read_text()
    doc = json.loads(text)
    return doc["protocols"] if "protocols" in doc else doc


def flat_types(types: dict[str, list[str]]) -> list[str]:
    return [t for ts in types.values() for t in ts]


def protocol_of(message_type: str, types: dict[str, list[str]]) -> str | None:
    for proto, ts in types.items():
        if message_type in ts:
            return proto
    return None
