"""Parser and printer for meta-correspondence expressions in proposal bodies.

Grammar:  Name '[' Id ':' Id (ARROW | BIARROW) Id ':' Id ']'
with ARROW one of ``->`` / ``→`` and BIARROW one of ``<->`` / ``↔``.
Whitespace between tokens is ignored. The arrow must agree with the
registered relationship's symmetry. The canonical printed form uses the
ASCII arrows with single spaces around the arrow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import (
    ArrowMismatch,
    DuplicateName,
    NotationSyntaxError,
    SelfCorrespondence,
    UnknownParent,
    UnknownRelationship,
)


@dataclass(frozen=True)
class RelationshipDef:
    name: str
    symmetric: bool
    parent: Optional[str] = None

    def to_json(self) -> dict:
        return {"name": self.name, "symmetric": self.symmetric, "parent": self.parent}


@dataclass(frozen=True)
class End:
    metamodel: str
    element: str

    def __str__(self) -> str:
        return f"{self.metamodel}:{self.element}"


@dataclass(frozen=True, eq=False)
class Correspondence:
    relationship: str
    left: End
    right: End
    directed: bool

    def __eq__(self, other) -> bool:
        if not isinstance(other, Correspondence):
            return NotImplemented
        if self.relationship != other.relationship or self.directed != other.directed:
            return False
        if self.directed:
            return self.left == other.left and self.right == other.right
        return {self.left, self.right} == {other.left, other.right}

    def __hash__(self) -> int:
        ends = (self.left, self.right) if self.directed else frozenset((self.left, self.right))
        return hash((self.relationship, self.directed, ends))

    def to_json(self) -> dict:
        return {
            "relationship": self.relationship,
            "left": {"metamodel": self.left.metamodel, "element": self.left.element},
            "right": {"metamodel": self.right.metamodel, "element": self.right.element},
            "directed": self.directed,
        }


class RelationshipRegistry:
    """Read-mostly registry of relationship definitions; registration serialized."""

    def __init__(self):
        self._defs: dict[str, RelationshipDef] = {}

    def register(self, definition: RelationshipDef) -> None:
        if definition.name in self._defs:
            raise DuplicateName(f"relationship {definition.name!r} already registered")
        if definition.parent is not None and definition.parent not in self._defs:
            raise UnknownParent(f"unknown parent relationship {definition.parent!r}")
        self._defs[definition.name] = definition

    def get(self, name: str) -> RelationshipDef:
        try:
            return self._defs[name]
        except KeyError:
            raise UnknownRelationship(f"unknown relationship {name!r}") from None

    def names(self) -> list:
        return sorted(self._defs)


def builtin_registry() -> RelationshipRegistry:
    reg = RelationshipRegistry()
    reg.register(RelationshipDef("Similarity", symmetric=True))
    reg.register(RelationshipDef("Dependency", symmetric=False))
    reg.register(RelationshipDef("Induction", symmetric=False, parent="Dependency"))
    return reg


DEFAULT_REGISTRY = builtin_registry()


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def byte_offset(self) -> int:
        return len(self.text[: self.pos].encode("utf-8"))

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def fail(self, expected: str):
        raise NotationSyntaxError(self.byte_offset(), expected)

    def literal(self, ch: str, expected: str) -> None:
        self.skip_ws()
        if self.pos < len(self.text) and self.text[self.pos] == ch:
            self.pos += 1
            return
        self.fail(expected)

    def identifier(self) -> str:
        self.skip_ws()
        start = self.pos
        if self.pos < len(self.text) and (self.text[self.pos].isalpha()):
            self.pos += 1
            while self.pos < len(self.text) and (
                self.text[self.pos].isalnum() or self.text[self.pos] == "_"
            ):
                self.pos += 1
            return self.text[start: self.pos]
        self.fail("identifier")

    def arrow(self) -> bool:
        """Returns True for a bidirectional arrow, False for a directed one."""
        self.skip_ws()
        t, i = self.text, self.pos
        if t.startswith("<->", i):
            self.pos += 3
            return True
        if t.startswith("↔", i):
            self.pos += 1
            return True
        if t.startswith("->", i):
            self.pos += 2
            return False
        if t.startswith("→", i):
            self.pos += 1
            return False
        self.fail("arrow '->' or '<->'")

    def end_of_input(self) -> None:
        self.skip_ws()
        if self.pos != len(self.text):
            self.fail("end of input")


def parse(text: str, registry: Optional[RelationshipRegistry] = None) -> Correspondence:
    reg = registry or DEFAULT_REGISTRY
    s = _Scanner(text)
    name = s.identifier()
    s.literal("[", "'['")
    left_mm = s.identifier()
    s.literal(":", "':'")
    left_el = s.identifier()
    bidirectional = s.arrow()
    right_mm = s.identifier()
    s.literal(":", "':'")
    right_el = s.identifier()
    s.literal("]", "']'")
    s.end_of_input()

    definition = reg.get(name)
    if definition.symmetric != bidirectional:
        want = "'<->'" if definition.symmetric else "'->'"
        raise ArrowMismatch(f"relationship {name!r} requires {want}")
    left, right = End(left_mm, left_el), End(right_mm, right_el)
    if left == right:
        raise SelfCorrespondence("a correspondence must relate two distinct elements")
    return Correspondence(relationship=name, left=left, right=right,
                          directed=not definition.symmetric)


def render(c: Correspondence) -> str:
    arrow = "->" if c.directed else "<->"
    return f"{c.relationship}[{c.left} {arrow} {c.right}]"


def try_parse(text: str, registry: Optional[RelationshipRegistry] = None) -> Optional[Correspondence]:
    """Best-effort parse for notation-agnostic proposal bodies."""
    try:
        return parse(text, registry)
    except Exception:
        return None
