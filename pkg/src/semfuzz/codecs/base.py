"""Shared codec plumbing: errors, a byte cursor, fixture file loaders."""
from __future__ import annotations

import re
from pathlib import Path

from ..model import FieldNode, FieldPath, Message, field_paths, get


class CodecError(Exception):
    pass


class MalformedWire(CodecError):
    pass


class Unencodable(CodecError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class NoRuleForDerivedField(CodecError):
    pass


class Cursor:
    """Forward-only reader over wire bytes."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int) -> bytes:
        if n < 0 or self.remaining < n:
            raise MalformedWire(f"need {n} bytes at offset {self.pos}, have {self.remaining}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return int.from_bytes(self.take(2), "big")

    def u24(self) -> int:
        return int.from_bytes(self.take(3), "big")

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")


def canonical_freeze_paths(msg: Message, freeze) -> set[str]:
    """Map user-supplied freeze paths onto the canonical rendered paths of msg.

    Paths that no longer resolve (target removed later in the sequence)
    are dropped silently.
    """
    if not freeze:
        return set()
    frozen_nodes = []
    for f in freeze:
        try:
            frozen_nodes.append(get(msg, f))
        except Exception:
            continue
    out = set()
    for p in field_paths(msg):
        node = get(msg, p)
        if any(node is fn for fn in frozen_nodes):
            out.add(p.render())
    return out


def repair_tree(root: FieldNode, frozen: set, recompute) -> FieldNode:
    """Rebuild root bottom-up, recomputing derived leaves.

    ``recompute(parent, siblings, pos, path)`` returns the new FieldValue
    for the derived node ``siblings[pos]`` (children already repaired), or
    None when no rule applies.  Paths in ``frozen`` keep their values.
    """
    from dataclasses import replace

    from ..model import Composite

    def fix(node: FieldNode, path: str) -> FieldNode:
        if not node.is_composite:
            return node
        counts: dict = {}
        for c in node.children:
            counts[c.name] = counts.get(c.name, 0) + 1
        seen: dict = {}
        repaired = []
        for c in node.children:
            idx = seen.get(c.name, 0)
            seen[c.name] = idx + 1
            seg = f"{c.name}[{idx}]" if counts[c.name] > 1 else c.name
            cpath = f"{path}.{seg}" if path else seg
            repaired.append((fix(c, cpath), cpath))
        final = []
        siblings = [c for c, _ in repaired]
        for pos, (c, cpath) in enumerate(repaired):
            if c.derived and cpath not in frozen:
                value = recompute(node, siblings, pos, cpath)
                if value is None:
                    raise NoRuleForDerivedField(cpath)
                c = replace(c, value=value)
                siblings[pos] = c
            final.append(c)
        return replace(node, value=Composite(tuple(final)))

    return fix(root, "")


_INDEX_RE = re.compile(r"\[\d+\]")


def strip_indices(rendered: str) -> str:
    return _INDEX_RE.sub("", rendered)


def load_fixture_bytes(path) -> bytes:
    """Read a .bin (raw) or .hex (whitespace-tolerant hex dump) fixture."""
    p = Path(path)
    data = p.read_bytes()
    if p.suffix == ".hex":
        return bytes.fromhex("".join(data.decode("ascii").split()))
    return data
