"""Data values, their canonical total order, schemas, and the JSON codec.

Every value the engine touches is one of eight variants below.  The total
order is what makes bags canonical: cross-variant comparisons go by a fixed
variant rank (Int < Real < Bool < Str < Unit < Tuple < Tagged < BagV), and
only same-variant values compare by content.  Each value exposes an
injective ``key`` tuple so sorting and equality can use native tuple
comparison instead of a comparator callback.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Iterable, Mapping, Optional

from .errors import EngineTypeError, ParseError, SchemaError

_TAG_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class Value:
    """Base class; comparison and hashing are shared via ``key``."""

    @cached_property
    def key(self) -> tuple:
        return self._key()

    def _key(self) -> tuple:  # pragma: no cover - abstract
        raise NotImplementedError

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Value):
            return NotImplemented
        return self.key == other.key

    def __ne__(self, other: object) -> bool:
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    def __lt__(self, other: "Value") -> bool:
        return self.key < other.key

    def __le__(self, other: "Value") -> bool:
        return self.key <= other.key

    def __gt__(self, other: "Value") -> bool:
        return self.key > other.key

    def __ge__(self, other: "Value") -> bool:
        return self.key >= other.key

    def __hash__(self) -> int:
        return hash(self.key)


def compare(a: Value, b: Value) -> int:
    """Three-way comparison in the canonical order: -1, 0 or 1."""
    ka, kb = a.key, b.key
    return (ka > kb) - (ka < kb)


@dataclass(frozen=True, eq=False)
class Int(Value):
    value: int

    def __post_init__(self):
        if type(self.value) is not int:
            raise EngineTypeError(f"Int expects a Python int, got {type(self.value).__name__}")

    def _key(self) -> tuple:
        return (0, self.value)

    def __repr__(self) -> str:
        return f"Int({self.value})"


@dataclass(frozen=True, eq=False)
class Real(Value):
    value: float

    def __post_init__(self):
        if type(self.value) is int:
            object.__setattr__(self, "value", float(self.value))
        elif type(self.value) is not float:
            raise EngineTypeError(f"Real expects a Python float, got {type(self.value).__name__}")
        if math.isnan(self.value):
            raise EngineTypeError("Real cannot hold NaN")

    def _key(self) -> tuple:
        # Sign bit breaks the -0.0 == 0.0 tie so the order stays injective.
        return (1, self.value, 0 if math.copysign(1.0, self.value) < 0 else 1)

    def __repr__(self) -> str:
        return f"Real({self.value!r})"


@dataclass(frozen=True, eq=False)
class Bool(Value):
    value: bool

    def __post_init__(self):
        if type(self.value) is not bool:
            raise EngineTypeError(f"Bool expects a Python bool, got {type(self.value).__name__}")

    def _key(self) -> tuple:
        return (2, self.value)

    def __repr__(self) -> str:
        return f"Bool({self.value})"


@dataclass(frozen=True, eq=False)
class Str(Value):
    value: str

    def __post_init__(self):
        if type(self.value) is not str:
            raise EngineTypeError(f"Str expects a Python str, got {type(self.value).__name__}")

    def _key(self) -> tuple:
        return (3, self.value)

    def __repr__(self) -> str:
        return f"Str({self.value!r})"


@dataclass(frozen=True, eq=False)
class Unit(Value):
    def _key(self) -> tuple:
        return (4,)

    def __repr__(self) -> str:
        return "Unit()"


UNIT = Unit()


@dataclass(frozen=True, eq=False)
class Tuple(Value):
    items: tuple[Value, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        for it in self.items:
            if not isinstance(it, Value):
                raise EngineTypeError(f"Tuple items must be values, got {type(it).__name__}")

    def _key(self) -> tuple:
        return (5, tuple(it.key for it in self.items))

    def __repr__(self) -> str:
        return f"Tuple({list(self.items)!r})"


@dataclass(frozen=True, eq=False)
class Tagged(Value):
    tag: str
    value: Value

    def __post_init__(self):
        if not (type(self.tag) is str and _TAG_RE.match(self.tag)):
            raise EngineTypeError(f"invalid tag: {self.tag!r}")
        if not isinstance(self.value, Value):
            raise EngineTypeError("Tagged payload must be a value")

    def _key(self) -> tuple:
        return (6, self.tag, self.value.key)

    def __repr__(self) -> str:
        return f"Tagged({self.tag!r}, {self.value!r})"


@dataclass(frozen=True, eq=False)
class BagV(Value):
    """A bag as a first-class value (rows of nested relations, group results)."""

    bag: Any  # a bags.Bag; typed loosely to avoid a circular import

    def __post_init__(self):
        from .bags import Bag  # deferred: bags.py imports this module

        if not isinstance(self.bag, Bag):
            raise EngineTypeError("BagV expects a Bag")

    def _key(self) -> tuple:
        return (7, tuple(e.key for e in self.bag.elements))

    def __repr__(self) -> str:
        return f"BagV({list(self.bag.elements)!r})"


# ---------------------------------------------------------------------------
# Schemas


class Schema:
    """Base class for structural types; all concrete schemas are frozen."""


@dataclass(frozen=True)
class IntT(Schema):
    pass


@dataclass(frozen=True)
class RealT(Schema):
    pass


@dataclass(frozen=True)
class BoolT(Schema):
    pass


@dataclass(frozen=True)
class StrT(Schema):
    pass


@dataclass(frozen=True)
class UnitT(Schema):
    pass


@dataclass(frozen=True)
class TupleT(Schema):
    items: tuple[Schema, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))


@dataclass(frozen=True)
class TaggedT(Schema):
    """Sum type: maps each admissible tag to its payload schema."""

    variants: tuple[tuple[str, Schema], ...]

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(sorted(self.variants)))

    @classmethod
    def of(cls, mapping: Mapping[str, Schema]) -> "TaggedT":
        return cls(tuple(sorted(mapping.items())))

    def get(self, tag: str) -> Optional[Schema]:
        for t, s in self.variants:
            if t == tag:
                return s
        return None


@dataclass(frozen=True)
class BagT(Schema):
    """Bag type; ``elem=None`` means the element type is unconstrained,
    which only happens for bags that are provably empty."""

    elem: Optional[Schema]


def typecheck(v: Value, s: Schema) -> bool:
    """Does value ``v`` inhabit schema ``s``?"""
    if isinstance(s, IntT):
        return isinstance(v, Int)
    if isinstance(s, RealT):
        return isinstance(v, Real)
    if isinstance(s, BoolT):
        return isinstance(v, Bool)
    if isinstance(s, StrT):
        return isinstance(v, Str)
    if isinstance(s, UnitT):
        return isinstance(v, Unit)
    if isinstance(s, TupleT):
        return (
            isinstance(v, Tuple)
            and len(v.items) == len(s.items)
            and all(typecheck(it, st) for it, st in zip(v.items, s.items))
        )
    if isinstance(s, TaggedT):
        if not isinstance(v, Tagged):
            return False
        payload = s.get(v.tag)
        return payload is not None and typecheck(v.value, payload)
    if isinstance(s, BagT):
        if not isinstance(v, BagV):
            return False
        if s.elem is None:
            return v.bag.size == 0
        return all(typecheck(e, s.elem) for e in v.bag.elements)
    raise EngineTypeError(f"unknown schema {s!r}")


def infer_schema(v: Value) -> Schema:
    if isinstance(v, Int):
        return IntT()
    if isinstance(v, Real):
        return RealT()
    if isinstance(v, Bool):
        return BoolT()
    if isinstance(v, Str):
        return StrT()
    if isinstance(v, Unit):
        return UnitT()
    if isinstance(v, Tuple):
        return TupleT(tuple(infer_schema(it) for it in v.items))
    if isinstance(v, Tagged):
        return TaggedT.of({v.tag: infer_schema(v.value)})
    if isinstance(v, BagV):
        elem: Optional[Schema] = None
        for e in v.bag.elements:
            es = infer_schema(e)
            elem = es if elem is None else unify_schema(elem, es)
        return BagT(elem)
    raise EngineTypeError(f"cannot infer schema of {v!r}")


def unify_schema(a: Schema, b: Schema) -> Schema:
    """Least common schema of two row shapes; tagged variants take unions."""
    if type(a) is type(b) and isinstance(a, (IntT, RealT, BoolT, StrT, UnitT)):
        return a
    if isinstance(a, TupleT) and isinstance(b, TupleT):
        if len(a.items) != len(b.items):
            raise SchemaError(f"tuple arity mismatch: {len(a.items)} vs {len(b.items)}")
        return TupleT(tuple(unify_schema(x, y) for x, y in zip(a.items, b.items)))
    if isinstance(a, TaggedT) and isinstance(b, TaggedT):
        merged = dict(a.variants)
        for tag, s in b.variants:
            merged[tag] = s if tag not in merged else unify_schema(merged[tag], s)
        return TaggedT.of(merged)
    if isinstance(a, BagT) and isinstance(b, BagT):
        if a.elem is None:
            return b
        if b.elem is None:
            return a
        return BagT(unify_schema(a.elem, b.elem))
    raise SchemaError(f"cannot unify {a!r} with {b!r}")


# ---------------------------------------------------------------------------
# JSON codec


def to_json(v: Value) -> Any:
    """Plain Python object ready for json.dumps."""
    if isinstance(v, (Int, Real, Bool, Str)):
        return v.value
    if isinstance(v, Unit):
        return None
    if isinstance(v, Tuple):
        return [to_json(it) for it in v.items]
    if isinstance(v, Tagged):
        return {"tag": v.tag, "value": to_json(v.value)}
    if isinstance(v, BagV):
        return {"bag": [to_json(e) for e in v.bag.elements]}
    raise EngineTypeError(f"cannot serialize {v!r}")


def from_json(obj: Any) -> Value:
    """Inverse of to_json.  Bags are re-canonicalized on the way in."""
    from .bags import Bag

    if obj is None:
        return UNIT
    if type(obj) is bool:
        return Bool(obj)
    if type(obj) is int:
        return Int(obj)
    if type(obj) is float:
        if math.isnan(obj):
            raise EngineTypeError("NaN is not a value")
        return Real(obj)
    if type(obj) is str:
        return Str(obj)
    if type(obj) is list:
        return Tuple(tuple(from_json(x) for x in obj))
    if type(obj) is dict:
        if set(obj) == {"tag", "value"}:
            if type(obj["tag"]) is not str:
                raise EngineTypeError("tag must be a string")
            return Tagged(obj["tag"], from_json(obj["value"]))
        if set(obj) == {"bag"}:
            if type(obj["bag"]) is not list:
                raise EngineTypeError("bag body must be an array")
            return BagV(Bag.of(from_json(x) for x in obj["bag"]))
        raise EngineTypeError(f"object keys {sorted(obj)} are neither a tagged value nor a bag")
    raise EngineTypeError(f"cannot read a value from {type(obj).__name__}")


def serialize(v: Value, *, indent: Optional[int] = None) -> str:
    return json.dumps(to_json(v), indent=indent, sort_keys=True)


def deserialize(text: str) -> Value:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno, e.colno) from None
    return from_json(obj)
