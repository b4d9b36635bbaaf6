"""Literals, CNF formulas, grounded skill primitives and the skill catalog."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Union

from .mission_spec import CLASS_PREDICATES

# predicate name -> accepted arities
PREDICATES: dict[str, tuple[int, ...]] = {
    "in_hand": (1, 2),
    "is_aligned": (1,),
    "is_grasped": (1,),
    "is_placed": (1,),
    "is_done": (1,),
    "at_station": (1,),
    "part_state": (2,),
    "agent_state": (2,),
    "pose_ok": (1,),
    "true": (0,),
    **{name: (1,) for name in CLASS_PREDICATES},
}


class UnknownPredicate(LookupError):
    pass


class UnboundArgument(ValueError):
    pass


@dataclass(frozen=True)
class Literal:
    predicate: str
    args: tuple[str, ...] = ()
    negated: bool = False

    def __post_init__(self):
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))

    def negate(self) -> "Literal":
        return Literal(self.predicate, self.args, not self.negated)

    def check(self) -> None:
        if self.predicate not in PREDICATES:
            raise UnknownPredicate(self.predicate)
        if len(self.args) not in PREDICATES[self.predicate]:
            raise UnboundArgument(f"{self.predicate} takes {PREDICATES[self.predicate]} arguments, got {len(self.args)}")

    def __str__(self) -> str:
        text = f"{self.predicate}({','.join(self.args)})"
        return "not " + text if self.negated else text


def lit(predicate: str, *args: str) -> Literal:
    return Literal(predicate, tuple(args))


def neg(predicate: str, *args: str) -> Literal:
    return Literal(predicate, tuple(args), True)


TRUE = lit("true")

_LITERAL_RE = re.compile(r"(not\s+)?([A-Za-z_][A-Za-z0-9_]*)\(([^()]*)\)")


def parse_literal(text: str) -> Literal:
    m = _LITERAL_RE.fullmatch(text.strip())
    if not m:
        raise ValueError(f"bad literal {text!r}")
    args = tuple(a.strip() for a in m.group(3).split(",")) if m.group(3).strip() else ()
    return Literal(m.group(2), args, bool(m.group(1)))


Clause = tuple[Literal, ...]
CNF = tuple[Clause, ...]


def cnf(*items: Union[Literal, Iterable[Literal]]) -> CNF:
    """Build a CNF; a bare literal is a unit clause, an iterable a disjunction."""
    out = []
    for item in items:
        if isinstance(item, Literal):
            out.append((item,))
        else:
            clause = tuple(item)
            if not clause:
                raise ValueError("empty clause")
            out.append(clause)
    return tuple(out)


def format_cnf(formula: CNF) -> str:
    if not formula:
        return "true"
    return " and ".join(
        str(c[0]) if len(c) == 1 else "(" + " or ".join(map(str, c)) + ")" for c in formula)


def literals(formula: CNF) -> list[Literal]:
    return [l for clause in formula for l in clause]


# -- skill catalog ----------------------------------------------------------

SKILL_CATALOG: dict[str, tuple[str, ...]] = {
    "Detect": ("Object", "Force", "Grasp"),
    "PickUp": ("ComputeGrasp", "Grasp"),
    "Move": ("Transport", "MoveUntilForce", "Servo"),
    "Align": ("Align",),
    "Fasten": ("ScrewPrim", "InsertPrim", "MountPrim", "UnscrewPrim", "ExtractPrim"),
    "Release": ("Release",),
    "Verify": ("Pre", "Post"),
}


def _heads() -> tuple[str, ...]:
    out = []
    for skill, prims in SKILL_CATALOG.items():
        for prim in prims:
            out.append(skill if prim == skill else f"{skill}.{prim}")
    return tuple(out)


PRIMITIVE_HEADS = _heads()

TICK_COSTS = {
    "Detect": 1,
    "PickUp.ComputeGrasp": 1,
    "PickUp.Grasp": 1,
    "Move.Transport": 3,
    "Move.Servo": 5,
    "Move.MoveUntilForce": 4,
    "Align": 2,
    "Fasten": 4,
    "Release": 1,
    "Verify": 0,
}


def skill_of(head: str) -> str:
    return head.split(".", 1)[0]


def tick_cost(head: str) -> int:
    if head in TICK_COSTS:
        return TICK_COSTS[head]
    return TICK_COSTS[skill_of(head)]


@dataclass(frozen=True)
class SkillPrimitive:
    """A grounded primitive: head, named parameters and its conditions.

    Identity is the head and parameters; ``pre``/``post`` are derived from
    them by the domain and excluded from equality.
    """

    head: str
    params: tuple[tuple[str, str], ...]
    pre: CNF = field(default=(), compare=False)
    post: CNF = field(default=(), compare=False)

    def param(self, name: str, default: str | None = None) -> str | None:
        for key, value in self.params:
            if key == name:
                return value
        return default

    @property
    def part(self) -> str | None:
        return self.param("part")

    @property
    def agent(self) -> str | None:
        return self.param("agent")

    @property
    def grounded(self) -> bool:
        return all(value and not value.startswith("?") for _, value in self.params)

    def signature(self) -> str:
        return f"{self.head}({','.join(f'{k}={v}' for k, v in self.params)})"

    def __str__(self) -> str:
        return self.signature()


_SIGNATURE_RE = re.compile(r"([A-Za-z][A-Za-z.]*)\(([^()]*)\)")


def parse_signature(text: str) -> tuple[str, tuple[tuple[str, str], ...]]:
    m = _SIGNATURE_RE.fullmatch(text.strip())
    if not m:
        raise ValueError(f"bad primitive {text!r}")
    params = []
    if m.group(2).strip():
        for item in m.group(2).split(","):
            key, sep, value = item.partition("=")
            if not sep or not key.strip():
                raise ValueError(f"bad parameter {item!r} in {text!r}")
            params.append((key.strip(), value.strip()))
    return m.group(1), tuple(params)
