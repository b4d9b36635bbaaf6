"""Behavior-tree nodes, tick semantics and the tree text format.

Composites keep memory: a Sequence or Fallback resumes at the child that
returned Running and resets once it finishes.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Callable, Iterator, Protocol

from .symbols import Literal, SkillPrimitive, parse_literal, parse_signature


class Status(enum.Enum):
    RUNNING = "Running"
    SUCCESS = "Success"
    FAILURE = "Failure"


class FailureKind(enum.Enum):
    ACTION = "ActionFailure"
    CONDITION = "ConditionFailure"


class MalformedTree(ValueError):
    pass


class NodeNotFound(KeyError):
    pass


class BTParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class WorldInterface(Protocol):
    def execute(self, prim: SkillPrimitive): ...

    def query(self, literal: Literal) -> bool: ...


@dataclass(frozen=True)
class FailureSource:
    node_id: str
    kind: FailureKind
    literal: Literal | None = None
    primitive: SkillPrimitive | None = None
    outcome: object = None
    guard: bool = False  # a branch guard that merely did not apply

    @property
    def error(self) -> str | None:
        return getattr(self.outcome, "error", None)


@dataclass(frozen=True)
class TickResult:
    status: Status
    failure_source: FailureSource | None = None

    def __post_init__(self):
        if (self.status is Status.FAILURE) != (self.failure_source is not None):
            raise ValueError("failure_source must be present exactly on Failure")


SUCCESS = TickResult(Status.SUCCESS)
RUNNING = TickResult(Status.RUNNING)

Trace = list  # of (node_id, kind name, Status) for every leaf ticked


@dataclass(eq=False)
class Node:
    node_id: str | None = field(default=None, kw_only=True)
    meta: dict[str, str] = field(default_factory=dict, kw_only=True)

    kind = "Node"

    @property
    def children(self) -> list["Node"]:
        return []

    def reset(self) -> None:
        for child in self.children:
            child.reset()

    def payload(self) -> str:
        return ""

    def tick(self, world: WorldInterface, trace: Trace | None) -> TickResult:
        raise NotImplementedError

    def same_as(self, other: "Node") -> bool:
        """Structural equality including ids and metadata."""
        return (type(self) is type(other) and self.node_id == other.node_id and self.meta == other.meta
                and self.payload() == other.payload() and len(self.children) == len(other.children)
                and all(a.same_as(b) for a, b in zip(self.children, other.children)))


@dataclass(eq=False)
class _Composite(Node):
    nodes: list[Node] = field(default_factory=list)
    _current: int = field(default=0, init=False, repr=False)

    def __post_init__(self):
        self.nodes = list(self.nodes)
        if not self.nodes:
            raise MalformedTree(f"{self.kind} needs at least one child")

    @property
    def children(self) -> list[Node]:
        return self.nodes

    def reset(self) -> None:
        self._current = 0
        super().reset()


@dataclass(eq=False)
class Sequence(_Composite):
    kind = "Sequence"

    def tick(self, world, trace=None):
        while self._current < len(self.nodes):
            result = self.nodes[self._current].tick(world, trace)
            if result.status is Status.RUNNING:
                return result
            if result.status is Status.FAILURE:
                self._current = 0
                return result
            self._current += 1
        self._current = 0
        return SUCCESS


@dataclass(eq=False)
class Fallback(_Composite):
    kind = "Fallback"

    _failure: TickResult | None = field(default=None, init=False, repr=False)

    def reset(self) -> None:
        self._failure = None
        super().reset()

    def tick(self, world, trace=None):
        # Report the last failure, except that a guard which merely did not
        # apply never hides an earlier real failure.
        while self._current < len(self.nodes):
            result = self.nodes[self._current].tick(world, trace)
            if result.status is Status.RUNNING:
                return result
            if result.status is Status.SUCCESS:
                self._current, self._failure = 0, None
                return result
            if self._failure is None or not result.failure_source.guard:
                self._failure = result
            self._current += 1
        result, self._current, self._failure = self._failure, 0, None
        return result


@dataclass(eq=False)
class Condition(Node):
    literal: Literal = None
    kind = "Condition"

    def payload(self):
        return str(self.literal)

    def tick(self, world, trace=None):
        ok = bool(world.query(self.literal))
        if trace is not None:
            trace.append((self.node_id, self.kind, Status.SUCCESS if ok else Status.FAILURE))
        if ok:
            return SUCCESS
        return TickResult(Status.FAILURE, FailureSource(self.node_id, FailureKind.CONDITION, literal=self.literal,
                                                        guard=self.meta.get("role") == "guard"))


@dataclass(eq=False)
class Action(Node):
    primitive: SkillPrimitive = None
    agent: str | None = None
    kind = "Action"

    def __post_init__(self):
        if self.agent is None and self.primitive is not None:
            self.agent = self.primitive.agent

    def payload(self):
        return self.primitive.signature()

    def tick(self, world, trace=None):
        outcome = world.execute(self.primitive)
        status = {"InProgress": Status.RUNNING, "Done": Status.SUCCESS}.get(
            getattr(outcome.status, "value", outcome.status), Status.FAILURE)
        if trace is not None:
            trace.append((self.node_id, self.kind, status))
        if status is Status.FAILURE:
            return TickResult(status, FailureSource(self.node_id, FailureKind.ACTION,
                                                    primitive=self.primitive, outcome=outcome))
        return RUNNING if status is Status.RUNNING else SUCCESS


@dataclass(eq=False)
class _Decorator(Node):
    child: Node = None

    def __post_init__(self):
        if not isinstance(self.child, Node):
            raise MalformedTree(f"{self.kind} needs exactly one child")

    @property
    def children(self):
        return [self.child]


@dataclass(eq=False)
class RetryUntilSuccessful(_Decorator):
    max_attempts: int = 3
    _failures: int = field(default=0, init=False, repr=False)
    kind = "RetryUntilSuccessful"

    def payload(self):
        return f"max={self.max_attempts}"

    def reset(self):
        self._failures = 0
        super().reset()

    def tick(self, world, trace=None):
        result = self.child.tick(world, trace)
        if result.status is Status.FAILURE:
            self._failures += 1
            if self._failures < self.max_attempts:
                self.child.reset()
                return RUNNING
            self._failures = 0
            return result
        if result.status is Status.SUCCESS:
            self._failures = 0
        return result


@dataclass(eq=False)
class RunNTimes(_Decorator):
    n: int = 1
    _count: int = field(default=0, init=False, repr=False)
    kind = "RunNTimes"

    def payload(self):
        return f"n={self.n}"

    def reset(self):
        self._count = 0
        super().reset()

    def tick(self, world, trace=None):
        result = self.child.tick(world, trace)
        if result.status is Status.SUCCESS:
            self._count += 1
            if self._count < self.n:
                self.child.reset()
                return RUNNING
            self._count = 0
        elif result.status is Status.FAILURE:
            self._count = 0
        return result


@dataclass(eq=False)
class ForceSuccess(_Decorator):
    kind = "ForceSuccess"

    def tick(self, world, trace=None):
        result = self.child.tick(world, trace)
        return SUCCESS if result.status is Status.FAILURE else result


BTNode = Node
NODE_KINDS = {cls.kind: cls for cls in (Sequence, Fallback, Condition, Action,
                                         RetryUntilSuccessful, RunNTimes, ForceSuccess)}


def tick(tree: Node, world: WorldInterface, trace: Trace | None = None) -> TickResult:
    if not isinstance(tree, Node):
        raise MalformedTree(f"not a tree node: {tree!r}")
    return tree.tick(world, trace)


# -- traversal and ids ------------------------------------------------------


def walk(tree: Node) -> Iterator[Node]:
    stack = [tree]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def find(tree: Node, node_id: str) -> Node:
    for node in walk(tree):
        if node.node_id == node_id:
            return node
    raise NodeNotFound(node_id)


def parent_of(tree: Node, node_id: str) -> Node | None:
    for node in walk(tree):
        if any(c.node_id == node_id for c in node.children):
            return node
    if tree.node_id == node_id:
        return None
    raise NodeNotFound(node_id)


def _id_number(node_id: str | None) -> int:
    m = re.fullmatch(r"n(\d+)", node_id or "")
    return int(m.group(1)) if m else -1


def assign_ids(tree: Node, start: int | None = None) -> Node:
    """Give every unnumbered node a fresh ``n<k>`` id, in preorder."""
    nodes = list(walk(tree))
    counter = start if start is not None else max((_id_number(n.node_id) for n in nodes), default=-1) + 1
    for node in nodes:
        if node.node_id is None:
            node.node_id = f"n{counter}"
            counter += 1
    check_tree(tree)
    return tree


def check_tree(tree: Node) -> None:
    seen = set()
    for node in walk(tree):
        if node.node_id is None:
            raise MalformedTree("node without id")
        if node.node_id in seen:
            raise MalformedTree(f"duplicate node id {node.node_id}")
        seen.add(node.node_id)
        if isinstance(node, _Composite) and not node.nodes:
            raise MalformedTree(f"{node.node_id}: {node.kind} has no children")


# -- text -------------------------------------------------------------------

HEADER = "bt 1"
_META_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*=[^\s{}=]*")


def _format_meta(meta: dict[str, str]) -> str:
    return "{" + " ".join(f"{k}={v}" for k, v in sorted(meta.items())) + "}"


def serialize_tree(tree: Node) -> str:
    lines = [HEADER]

    def emit(node, depth):
        text = f"{'  ' * depth}{node.node_id} {node.kind}"
        if node.payload():
            text += " " + node.payload()
        lines.append(text + " " + _format_meta(node.meta))
        for child in node.children:
            emit(child, depth + 1)

    emit(tree, 0)
    return "\n".join(lines) + "\n"


def _default_primitive(signature: str) -> SkillPrimitive:
    head, params = parse_signature(signature)
    return SkillPrimitive(head, params)


def parse_tree(text: str, primitive_factory: Callable[[str], SkillPrimitive] | None = None) -> Node:
    """Inverse of :func:`serialize_tree`."""
    factory = primitive_factory or _default_primitive
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise BTParseError(f"missing header {HEADER!r}", 1)
    entries = []  # (depth, line number, id, kind, payload, meta)
    for number, raw in enumerate(lines[1:], 2):
        if not raw.strip():
            continue
        stripped = raw.lstrip(" ")
        indent = len(raw) - len(stripped)
        if indent % 2 or "\t" in raw[:indent]:
            raise BTParseError("indentation must be a multiple of two spaces", number)
        body, meta = stripped.rstrip(), {}
        brace = body.rfind(" {")
        if body.endswith("}") and brace >= 0:
            for item in body[brace + 2:-1].split():
                if not _META_RE.fullmatch(item):
                    raise BTParseError(f"bad metadata item {item!r}", number)
                key, value = item.split("=", 1)
                meta[key] = value
            body = body[:brace]
        words = body.split(" ", 2)
        if len(words) < 2:
            raise BTParseError(f"expected '<id> <kind> ...', got {stripped!r}", number)
        if words[1] not in NODE_KINDS:
            raise BTParseError(f"unknown node kind {words[1]!r}", number)
        entries.append((indent // 2, number, words[0], words[1], words[2] if len(words) > 2 else "", meta))
    if not entries:
        raise BTParseError("empty tree", len(lines))
    pos = 0

    def build(depth):
        nonlocal pos
        d, number, node_id, kind, payload, meta = entries[pos]
        if d != depth:
            raise BTParseError(f"node {node_id} is indented to depth {d}, expected {depth}", number)
        pos += 1
        kids = []
        while pos < len(entries) and entries[pos][0] > depth:
            kids.append(build(depth + 1))
        try:
            return _make(kind, payload, kids, node_id, meta)
        except (MalformedTree, ValueError, KeyError) as exc:
            raise BTParseError(f"node {node_id} ({kind}): {exc}", number) from exc

    def _make(kind, payload, kids, node_id, meta):
        common = {"node_id": node_id, "meta": meta}
        if kind in ("Sequence", "Fallback"):
            if payload:
                raise ValueError("composites take no payload")
            return NODE_KINDS[kind](kids, **common)
        leaf = kind in ("Condition", "Action")
        if leaf and kids:
            raise ValueError("leaf nodes take no children")
        if not leaf and len(kids) != 1:
            raise MalformedTree(f"decorator needs exactly one child, found {len(kids)}")
        if kind == "Condition":
            return Condition(literal=parse_literal(payload), **common)
        if kind == "Action":
            return Action(primitive=factory(payload), **common)
        if kind == "ForceSuccess":
            if payload:
                raise ValueError("ForceSuccess takes no payload")
            return ForceSuccess(child=kids[0], **common)
        m = re.fullmatch(r"(max|n)=(\d+)", payload)
        if not m:
            raise ValueError(f"bad decorator payload {payload!r}")
        if kind == "RetryUntilSuccessful" and m.group(1) == "max":
            return RetryUntilSuccessful(child=kids[0], max_attempts=int(m.group(2)), **common)
        if kind == "RunNTimes" and m.group(1) == "n":
            return RunNTimes(child=kids[0], n=int(m.group(2)), **common)
        raise ValueError(f"bad decorator payload {payload!r}")

    root = build(0)
    if pos != len(entries):
        raise BTParseError("more than one root node", entries[pos][1])
    try:
        check_tree(root)
    except MalformedTree as exc:
        raise BTParseError(str(exc)) from exc
    return root


def export_edges(tree: Node) -> str:
    """Graph description: one ``parent -> child`` line per edge."""
    return "".join(f"{node.node_id} -> {child.node_id}\n" for node in walk(tree) for child in node.children)

