"""Ordered field trees for protocol messages.

A Message is an immutable tree of named fields addressed by dotted paths
("handshake.extensions[1].type").  Seeds, mutated test cases, and codec
output all share this representation.  Mutation never modifies a tree in
place; every edit returns a fresh Message so one seed can fan out into
many test cases without coordination.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Union


class ModelError(Exception):
    """Base for message-model failures."""


class PathSyntaxError(ModelError):
    pass


class PathNotFound(ModelError):
    pass


class AmbiguousPath(ModelError):
    pass


class PositionOutOfRange(ModelError):
    pass


class TypeMismatch(ModelError):
    pass


# ---------------------------------------------------------------------------
# Field values


@dataclass(frozen=True)
class Uint:
    value: int
    bits: int = 16

    def __post_init__(self):
        if self.bits <= 0 or self.bits % 8 != 0:
            raise TypeMismatch(f"unsupported bit width {self.bits}")
        if not (0 <= self.value < (1 << self.bits)):
            raise TypeMismatch(f"value {self.value} does not fit in {self.bits} bits")


@dataclass(frozen=True)
class Bytes:
    data: bytes


@dataclass(frozen=True)
class Text:
    text: str


@dataclass(frozen=True)
class Composite:
    children: tuple["FieldNode", ...] = ()


FieldValue = Union[Uint, Bytes, Text, Composite]


@dataclass(frozen=True)
class FieldNode:
    name: str
    value: FieldValue
    derived: bool = False
    meta: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.name or "." in self.name or "[" in self.name or "]" in self.name:
            raise ModelError(f"bad field name {self.name!r}")
        if self.derived and not isinstance(self.value, (Uint, Bytes)):
            raise TypeMismatch(f"derived field {self.name!r} must be uint or bytes")

    @property
    def is_composite(self) -> bool:
        return isinstance(self.value, Composite)

    @property
    def children(self) -> tuple["FieldNode", ...]:
        if not isinstance(self.value, Composite):
            return ()
        return self.value.children


@dataclass(frozen=True)
class Message:
    protocol: str            # "DNS" | "HTTP1" | "TLS13" | "IPV6"
    message_type: str
    root: FieldNode

    def __post_init__(self):
        if not self.root.is_composite:
            raise ModelError("message root must be composite")


# ---------------------------------------------------------------------------
# Paths

_SEGMENT_RE = re.compile(r"^([^.\[\]]+)(?:\[(\d+|\*)\])?$")


@dataclass(frozen=True)
class FieldPath:
    """Dotted path with optional 0-based indices for repeated siblings."""

    segments: tuple[tuple[str, Optional[int]], ...]

    @classmethod
    def parse(cls, text: str) -> "FieldPath":
        if text == "":
            return cls(())
        segs = []
        for part in text.split("."):
            m = _SEGMENT_RE.match(part)
            if not m:
                raise PathSyntaxError(f"bad path segment {part!r} in {text!r}")
            name, idx = m.group(1), m.group(2)
            if idx == "*":
                raise PathSyntaxError(f"wildcard not allowed in concrete path {text!r}")
            segs.append((name, int(idx) if idx is not None else None))
        return cls(tuple(segs))

    def render(self) -> str:
        return ".".join(
            f"{name}[{idx}]" if idx is not None else name
            for name, idx in self.segments
        )

    def child(self, name: str, idx: Optional[int] = None) -> "FieldPath":
        return FieldPath(self.segments + ((name, idx),))

    @property
    def is_root(self) -> bool:
        return not self.segments

    def __str__(self) -> str:
        return self.render()


def _as_path(path: Union[str, FieldPath]) -> FieldPath:
    return path if isinstance(path, FieldPath) else FieldPath.parse(path)


def _match_children(node: FieldNode, name: str, idx: Optional[int], path: str):
    """Resolve one segment against node's children; returns child position."""
    positions = [i for i, c in enumerate(node.children) if c.name == name]
    if not positions:
        raise PathNotFound(f"no field {name!r} under {path or '<root>'}")
    if idx is None:
        if len(positions) > 1:
            raise AmbiguousPath(
                f"{name!r} matches {len(positions)} siblings under {path or '<root>'}; "
                "index required"
            )
        return positions[0]
    if idx >= len(positions):
        raise PathNotFound(f"{name}[{idx}] out of range under {path or '<root>'}")
    return positions[idx]


def get(msg: Message, path: Union[str, FieldPath]) -> FieldNode:
    """Return the node addressed by path (root itself for the empty path)."""
    p = _as_path(path)
    node = msg.root
    seen = []
    for name, idx in p.segments:
        pos = _match_children(node, name, idx, ".".join(seen))
        node = node.children[pos]
        seen.append(name)
    return node


def _rebuild(node: FieldNode, segments, edit) -> FieldNode:
    """Rebuild the spine from node down, applying edit at the final parent."""
    if not segments:
        return edit(node)
    name, idx = segments[0]
    pos = _match_children(node, name, idx, "")
    child = _rebuild(node.children[pos], segments[1:], edit)
    children = node.children[:pos] + (child,) + node.children[pos + 1:]
    return replace(node, value=Composite(children))


def insert_at(msg: Message, parent_path: Union[str, FieldPath],
              position: Optional[int], node: FieldNode) -> Message:
    """Insert node under parent; absent position appends."""
    p = _as_path(parent_path)
    get(msg, p)  # raise PathNotFound/AmbiguousPath early

    def edit(parent: FieldNode) -> FieldNode:
        if not parent.is_composite:
            raise TypeMismatch(f"cannot insert under non-composite {parent.name!r}")
        kids = parent.children
        pos = len(kids) if position is None else position
        if pos < 0 or pos > len(kids):
            raise PositionOutOfRange(f"position {position} > {len(kids)} children")
        return replace(parent, value=Composite(kids[:pos] + (node,) + kids[pos:]))

    return replace(msg, root=_rebuild(msg.root, p.segments, edit))


def remove_at(msg: Message, path: Union[str, FieldPath]) -> Message:
    p = _as_path(path)
    if p.is_root:
        raise PathNotFound("cannot remove the root")
    get(msg, p)
    *parent_segs, (name, idx) = p.segments

    def edit(parent: FieldNode) -> FieldNode:
        pos = _match_children(parent, name, idx, "")
        kids = parent.children
        return replace(parent, value=Composite(kids[:pos] + kids[pos + 1:]))

    return replace(msg, root=_rebuild(msg.root, tuple(parent_segs), edit))


def update_at(msg: Message, path: Union[str, FieldPath], value: FieldValue) -> Message:
    p = _as_path(path)
    if p.is_root:
        raise PathNotFound("cannot update the root")
    old = get(msg, p)
    if old.is_composite != isinstance(value, Composite):
        raise TypeMismatch(
            f"cannot replace {'composite' if old.is_composite else 'leaf'} "
            f"{old.name!r} with {type(value).__name__.lower()}"
        )
    if old.derived and not isinstance(value, (Uint, Bytes)):
        raise TypeMismatch(f"derived field {old.name!r} must stay uint or bytes")

    def edit(node: FieldNode) -> FieldNode:
        return replace(node, value=value, meta=None)

    return replace(msg, root=_rebuild(msg.root, p.segments, edit))


def rename_at(msg: Message, path: Union[str, FieldPath], new_name: str) -> Message:
    """Rename a node; used when a mutation targets the field *name* itself."""
    p = _as_path(path)
    if p.is_root:
        raise PathNotFound("cannot rename the root")
    get(msg, p)

    def edit(node: FieldNode) -> FieldNode:
        return replace(node, name=new_name, meta=None)

    return replace(msg, root=_rebuild(msg.root, p.segments, edit))


def field_paths(msg: Message) -> list[FieldPath]:
    """Depth-first, document-order paths of every node below the root.

    An index is attached to a segment only when the node shares its name
    with at least one sibling.
    """
    out: list[FieldPath] = []

    def walk(node: FieldNode, prefix: FieldPath):
        counts: dict[str, int] = {}
        for c in node.children:
            counts[c.name] = counts.get(c.name, 0) + 1
        seen: dict[str, int] = {}
        for c in node.children:
            idx = None
            if counts[c.name] > 1:
                idx = seen.get(c.name, 0)
            seen[c.name] = seen.get(c.name, 0) + 1
            p = prefix.child(c.name, idx)
            out.append(p)
            walk(c, p)

    walk(msg.root, FieldPath(()))
    return out


def iter_nodes(msg: Message) -> Iterator[tuple[FieldPath, FieldNode]]:
    for p in field_paths(msg):
        yield p, get(msg, p)


# ---------------------------------------------------------------------------
# Canonical JSON serialization

def value_to_json(value: FieldValue):
    if isinstance(value, Uint):
        return {"kind": "uint", "value": value.value, "bits": value.bits}
    if isinstance(value, Bytes):
        return {"kind": "bytes", "hex": value.data.hex()}
    if isinstance(value, Text):
        return {"kind": "text", "text": value.text}
    if isinstance(value, Composite):
        return {"kind": "composite", "children": [node_to_json(c) for c in value.children]}
    raise TypeMismatch(f"unknown value {value!r}")


def node_to_json(node: FieldNode) -> dict:
    return {"name": node.name, "derived": node.derived, "value": value_to_json(node.value)}


def message_to_json(msg: Message) -> dict:
    return {
        "protocol": msg.protocol,
        "message_type": msg.message_type,
        "root": node_to_json(msg.root),
    }


def value_from_json(obj) -> FieldValue:
    kind = obj.get("kind")
    if kind == "uint":
        return Uint(obj["value"], obj.get("bits", 16))
    if kind == "bytes":
        return Bytes(bytes.fromhex(obj["hex"]))
    if kind == "text":
        return Text(obj["text"])
    if kind == "composite":
        return Composite(tuple(node_from_json(c) for c in obj["children"]))
    raise ModelError(f"unknown value kind {kind!r}")


def node_from_json(obj) -> FieldNode:
    return FieldNode(obj["name"], value_from_json(obj["value"]), bool(obj.get("derived", False)))


def message_from_json(obj) -> Message:
    return Message(obj["protocol"], obj["message_type"], node_from_json(obj["root"]))


def dump_message(msg: Message) -> str:
    return json.dumps(message_to_json(msg), indent=2, sort_keys=False) + "\n"


def load_message(text: str) -> Message:
    return message_from_json(json.loads(text))


# Convenience constructors, used heavily by codecs and tests.

def uint(name: str, value: int, bits: int = 16, derived: bool = False) -> FieldNode:
    return FieldNode(name, Uint(value, bits), derived)


def raw(name: str, data: bytes, derived: bool = False) -> FieldNode:
    return FieldNode(name, Bytes(data), derived)


def text(name: str, s: str) -> FieldNode:
    return FieldNode(name, Text(s))


def comp(name: str, *children: FieldNode) -> FieldNode:
    return FieldNode(name, Composite(tuple(children)))
