"""Probability layer: exact finite-support distributions, seeded samplers,
and pushforward of deterministic queries over uncertain databases.

Exact distributions are canonical (support sorted, weights positive,
total within 1e-9 of one) so distribution equality is meaningful.  The
sampling side is built on explicit Seed values: a 64-bit master plus a
derivation path, hashed into an independent stream per path.  Every
parallel or multi-draw construct derives child seeds instead of sharing a
stream, which is what makes results independent of worker count.
"""
from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional

from .algebra import Query, eval_query
from .bags import Bag
from .errors import (
    EngineError,
    EngineTypeError,
    NormalizationError,
    NotFiniteError,
    WorldEvalError,
)
from .values import BagV, Int, Real, Tuple, Value

WEIGHT_EPS = 1e-9

_POISSON_INVERSION_CUTOFF = 30.0


@dataclass(frozen=True)
class Seed:
    """A reproducible stream address: (master, derivation path)."""

    master: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not (0 <= self.master < 2**64):
            raise EngineTypeError("seed master must be an unsigned 64-bit integer")
        for p in self.path:
            if not (0 <= p < 2**64):
                raise EngineTypeError("seed path entries must be unsigned 64-bit integers")

    def child(self, index: int) -> "Seed":
        return Seed(self.master, self.path + (index,))

    def rng(self) -> random.Random:
        h = hashlib.sha256()
        h.update(self.master.to_bytes(8, "little"))
        for p in self.path:
            h.update(p.to_bytes(8, "little"))
        return random.Random(int.from_bytes(h.digest(), "little"))


# ---------------------------------------------------------------------------
# Exact finite-support distributions


@dataclass(frozen=True)
class ExactDist:
    """Finite-support distribution over values, canonical by construction."""

    entries: tuple[tuple[Value, float], ...]

    @classmethod
    def from_weights(cls, weights: Iterable[tuple[Value, float]] | Mapping[Value, float]) -> "ExactDist":
        items = weights.items() if isinstance(weights, Mapping) else weights
        acc: dict[Value, float] = {}
        for v, w in items:
            if w < 0:
                raise NormalizationError(f"negative weight {w} for {v!r}")
            if w == 0.0:
                continue
            acc[v] = acc.get(v, 0.0) + w
        total = math.fsum(acc.values())
        if abs(total - 1.0) > WEIGHT_EPS:
            raise NormalizationError(f"weights sum to {total!r}, not 1")
        entries = tuple(sorted(acc.items(), key=lambda kv: kv[0].key))
        return cls(entries)

    @classmethod
    def dirac(cls, x: Value) -> "ExactDist":
        return cls(((x, 1.0),))

    @property
    def support(self) -> tuple[Value, ...]:
        return tuple(v for v, _ in self.entries)

    def weight(self, x: Value) -> float:
        for v, w in self.entries:
            if v == x:
                return w
        return 0.0

    def map(self, g: Callable[[Value], Value]) -> "ExactDist":
        return ExactDist.from_weights((g(v), w) for v, w in self.entries)

    def bind(self, f: Callable[[Value], "ExactDist"]) -> "ExactDist":
        out: dict[Value, float] = {}
        for v, w in self.entries:
            for u, wu in f(v).entries:
                out[u] = out.get(u, 0.0) + w * wu
        return ExactDist.from_weights(out)

    def close_to(self, other: "ExactDist", eps: float = WEIGHT_EPS) -> bool:
        keys = {v for v, _ in self.entries} | {v for v, _ in other.entries}
        return all(abs(self.weight(v) - other.weight(v)) <= eps for v in keys)


def dirac(x: Value) -> ExactDist:
    return ExactDist.dirac(x)


def bind_exact(f: Callable[[Value], ExactDist], p: ExactDist) -> ExactDist:
    return p.bind(f)


def map_exact(g: Callable[[Value], Value], p: ExactDist) -> ExactDist:
    return p.map(g)


def strength_exact(x: Value, p: ExactDist) -> ExactDist:
    return p.map(lambda y: Tuple((x, y)))


# ---------------------------------------------------------------------------
# Samplers


class SamplerExpr:
    pass


@dataclass(frozen=True)
class Dirac(SamplerExpr):
    value: Value


@dataclass(frozen=True)
class Bernoulli(SamplerExpr):
    """Draws Int 1 with probability p, else Int 0."""

    p: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise EngineTypeError(f"bernoulli parameter {self.p!r} outside [0, 1]")


@dataclass(frozen=True)
class Normal(SamplerExpr):
    mean: float
    stddev: float

    def __post_init__(self):
        if not (self.stddev > 0 and math.isfinite(self.stddev) and math.isfinite(self.mean)):
            raise EngineTypeError("normal needs a finite mean and a positive stddev")


@dataclass(frozen=True)
class Poisson(SamplerExpr):
    rate: float

    def __post_init__(self):
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise EngineTypeError(f"poisson rate {self.rate!r} must be finite and nonnegative")


@dataclass(frozen=True)
class Categorical(SamplerExpr):
    dist: ExactDist


@dataclass(frozen=True)
class Bind(SamplerExpr):
    inner: SamplerExpr
    fn: Callable[[Value], SamplerExpr]


@dataclass(frozen=True)
class MapS(SamplerExpr):
    fn: Callable[[Value], Value]
    inner: SamplerExpr


def normal_pair(rng: random.Random) -> tuple[float, float]:
    """Two independent standard normals from exactly two uniforms."""
    u1 = 1.0 - rng.random()  # (0, 1]: keeps the log finite
    u2 = rng.random()
    r = math.sqrt(-2.0 * math.log(u1))
    theta = 2.0 * math.pi * u2
    return r * math.cos(theta), r * math.sin(theta)


def poisson_draw(rate: float, rng: random.Random) -> int:
    """Poisson sample; multiplicative inversion for small rates, transformed
    rejection for large ones.  Both consume the stream deterministically."""
    if rate <= 0.0:
        return 0
    if rate <= _POISSON_INVERSION_CUTOFF:
        limit = math.exp(-rate)
        k = 0
        p = 1.0
        while True:
            p *= rng.random()
            if p <= limit:
                return k
            k += 1
    # Transformed rejection with squeeze, stable for large rates.
    b = 0.931 + 2.53 * math.sqrt(rate)
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    log_rate = math.log(rate)
    while True:
        u = rng.random() - 0.5
        v = rng.random()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + rate + 0.43)
        if us >= 0.07 and v <= vr:
            return int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        lhs = math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
        rhs = k * log_rate - rate - math.lgamma(k + 1.0)
        if lhs <= rhs:
            return int(k)


def draw_from(e: SamplerExpr, rng: random.Random) -> Value:
    """One draw, consuming the given stream in a fixed order."""
    if isinstance(e, Dirac):
        return e.value
    if isinstance(e, Bernoulli):
        return Int(1 if rng.random() < e.p else 0)
    if isinstance(e, Normal):
        z, _ = normal_pair(rng)
        return Real(e.mean + e.stddev * z)
    if isinstance(e, Poisson):
        return Int(poisson_draw(e.rate, rng))
    if isinstance(e, Categorical):
        u = rng.random()
        acc = 0.0
        for v, w in e.dist.entries:
            acc += w
            if u < acc:
                return v
        return e.dist.entries[-1][0]
    if isinstance(e, Bind):
        x = draw_from(e.inner, rng)
        return draw_from(e.fn(x), rng)
    if isinstance(e, MapS):
        return e.fn(draw_from(e.inner, rng))
    raise EngineTypeError(f"unknown sampler {e!r}")


def sample(e: SamplerExpr, seed: Seed) -> Value:
    return draw_from(e, seed.rng())


def exact_of(e: SamplerExpr) -> ExactDist:
    """Enumerate a discrete sampler exactly; continuous or unbounded
    primitives have no finite support and raise NotFiniteError."""
    if isinstance(e, Dirac):
        return ExactDist.dirac(e.value)
    if isinstance(e, Bernoulli):
        return ExactDist.from_weights({Int(0): 1.0 - e.p, Int(1): e.p})
    if isinstance(e, Normal):
        raise NotFiniteError("normal has uncountable support; use the mc backend")
    if isinstance(e, Poisson):
        raise NotFiniteError("poisson has unbounded support; use the mc backend")
    if isinstance(e, Categorical):
        return e.dist
    if isinstance(e, Bind):
        return exact_of(e.inner).bind(lambda x: exact_of(e.fn(x)))
    if isinstance(e, MapS):
        return exact_of(e.inner).map(e.fn)
    raise EngineTypeError(f"unknown sampler {e!r}")


# ---------------------------------------------------------------------------
# Pushforward


def pushforward_exact(q: Query, d: ExactDist, table: str = "db") -> ExactDist:
    """Transport an exact distribution over database bags through a query."""
    out: dict[Value, float] = {}
    for world, w in d.entries:
        if not isinstance(world, BagV):
            raise EngineTypeError("pushforward needs a distribution over bags")
        try:
            r = eval_query(q, {table: world.bag})
        except EngineError as e:
            raise WorldEvalError(world, e) from e
        out[r] = out.get(r, 0.0) + w
    return ExactDist.from_weights(out)


def pushforward_mc(
    q: Query,
    sampler,
    n: int,
    seed: Optional[Seed] = None,
    table: str = "db",
) -> list[Value]:
    """Apply a query to n sampled worlds, in sample-index order.

    ``sampler`` is either a SamplerExpr producing BagV values (sample i
    drawn under seed.child(i)) or any object with a ``world(index)``
    method that carries its own seed.
    """
    if isinstance(sampler, SamplerExpr):
        if seed is None:
            raise EngineTypeError("sampling a SamplerExpr needs a seed")

        def world_at(i: int) -> Bag:
            v = sample(sampler, seed.child(i))
            if not isinstance(v, BagV):
                raise EngineTypeError("world sampler must produce bags")
            return v.bag

    elif hasattr(sampler, "world"):
        world_at = sampler.world
    else:
        raise EngineTypeError("sampler must be a SamplerExpr or have a world(index) method")

    results: list[Value] = []
    for i in range(n):
        world = world_at(i)
        try:
            results.append(eval_query(q, {table: world}))
        except EngineError as e:
            raise WorldEvalError(BagV(world), e) from e
    return results
