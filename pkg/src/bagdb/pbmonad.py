"""The composite monad of probability over bags: distributive law, monad
structure, the generator combinators, and non-recursive generative rule
programs.

A probabilistic database is either a PBExact (an ExactDist whose support
values are bags) or a PBSampler (a function from sample index to world
bag, deterministic under the seed contract).  The distributive law turns
a collection of independent per-element distributions into one
distribution over bags; everything else is built from it.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import product as iproduct
from typing import Callable, Iterable, Optional, Sequence, Union

from .algebra import Cmp, Const, eval_expr, tuple_parts
from .bags import EMPTY, Bag, unit
from .dsl import Token, tokenize
from .errors import (
    EngineTypeError,
    ParseError,
    ProgramError,
    ResourceLimitError,
)
from .prob import (
    Bernoulli,
    ExactDist,
    Normal,
    Poisson,
    SamplerExpr,
    Seed,
    draw_from,
    exact_of,
    normal_pair,
    poisson_draw,
    sample,
)
from .values import UNIT, BagV, Bool, Int, Real, Str, Tagged, Tuple, Value

DEFAULT_WORLD_LIMIT = 10**6


# ---------------------------------------------------------------------------
# Distributive law


def distr_acc(p: ExactDist, acc: ExactDist) -> ExactDist:
    """One fold step: pair every outcome of p with every accumulated bag
    (double strength), then push through add."""
    out: dict[Value, float] = {}
    for x, wx in p.entries:
        for bv, wb in acc.entries:
            if not isinstance(bv, BagV):
                raise EngineTypeError("distr accumulator must hold bags")
            key = BagV(bv.bag.add(x))
            out[key] = out.get(key, 0.0) + wx * wb
    return ExactDist.from_weights(out)


def distr_exact(dists: Iterable[ExactDist]) -> ExactDist:
    """B(P(X)) -> P(B(X)): independent product of the element
    distributions, collected into bags.  Distributions are supplied as a
    sequence because they are not themselves data values; callers that
    start from a bag enumerate it in canonical order."""
    acc = ExactDist.dirac(BagV(EMPTY))
    for p in reversed(list(dists)):
        acc = distr_acc(p, acc)
    return acc


def distr_sample(samplers: Sequence[SamplerExpr], seed: Seed) -> Bag:
    """One draw per element under per-index child seeds, collected by add."""
    return Bag.of(sample(s, seed.child(i)) for i, s in enumerate(samplers))


# ---------------------------------------------------------------------------
# PB monad structure (exact backend)


def pb_unit_bag(b: Bag) -> ExactDist:
    return ExactDist.dirac(BagV(b))


def pb_unit_dist(p: ExactDist) -> ExactDist:
    return p.map(lambda x: BagV(unit(x)))


def pb_bind(f: Callable[[Value], ExactDist], m: ExactDist) -> ExactDist:
    """Kleisli extension: apply f to every element of every world,
    distribute the results, flatten per world, and mix by world weight."""
    out: dict[Value, float] = {}
    for bv, pw in m.entries:
        if not isinstance(bv, BagV):
            raise EngineTypeError("pb_bind needs a distribution over bags")
        per_world = distr_exact([f(x) for x in bv.bag])
        flattened = per_world.map(lambda b: BagV(b.bag.flatten()))  # type: ignore[union-attr]
        for o, po in flattened.entries:
            out[o] = out.get(o, 0.0) + pw * po
    return ExactDist.from_weights(out)


def pb_uplus(m1: ExactDist, m2: ExactDist) -> ExactDist:
    """Independent combination: convolution of world bags under uplus."""
    out: dict[Value, float] = {}
    for a, wa in m1.entries:
        for b, wb in m2.entries:
            if not isinstance(a, BagV) or not isinstance(b, BagV):
                raise EngineTypeError("pb_uplus needs distributions over bags")
            key = BagV(a.bag.uplus(b.bag))
            out[key] = out.get(key, 0.0) + wa * wb
    return ExactDist.from_weights(out)


# ---------------------------------------------------------------------------
# Samplers over worlds


@dataclass(frozen=True)
class PBSampler:
    """A probabilistic database in sampling form: world(i) is the i-th
    possible world, deterministic in i."""

    world_fn: Callable[[int], Bag]

    def world(self, index: int) -> Bag:
        if index < 0:
            raise EngineTypeError("sample indices are nonnegative")
        return self.world_fn(index)

    def worlds(self, n: int, workers: int = 1) -> list[Bag]:
        """First n worlds in index order; parallelism cannot change the
        result because every world is addressed by its index."""
        if workers <= 1:
            return [self.world_fn(i) for i in range(n)]
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(self.world_fn, range(n)))


def poisson_bag(rate: float, gen: SamplerExpr, seed: Seed) -> Bag:
    """Draw a Poisson count n, then n independent draws from gen."""
    n = poisson_draw(rate, seed.child(0).rng())
    return Bag.of(sample(gen, seed.child(1 + i)) for i in range(n))


def add_noise(b: Bag, sigma: float, seed: Seed) -> PBSampler:
    """Perturb the second field of every row with independent normal noise."""
    if not sigma > 0:
        raise EngineTypeError("noise stddev must be positive")
    for row in b:
        if not (isinstance(row, Tuple) and len(row.items) == 2 and isinstance(row.items[1], Real)):
            raise EngineTypeError(f"add_noise rows must be (key, Real) pairs, got {row!r}")

    def world_fn(i: int) -> Bag:
        rng = seed.child(i).rng()
        out = []
        for row in b:  # canonical order fixes the draw order
            key, r = row.items  # type: ignore[union-attr]
            z, _ = normal_pair(rng)
            out.append(Tuple((key, Real(r.value + sigma * z))))  # type: ignore[union-attr]
        return Bag.of(out)

    return PBSampler(world_fn)


def add_remove(b: Bag, keep_p: float, rate: float, gen: SamplerExpr, seed: Seed) -> PBSampler:
    """Keep each row with probability keep_p, then mix in a Poisson number
    of fresh draws from gen."""
    if not (0.0 <= keep_p <= 1.0):
        raise EngineTypeError(f"keep probability {keep_p!r} outside [0, 1]")
    if not rate >= 0:
        raise EngineTypeError("rate must be nonnegative")

    def world_fn(i: int) -> Bag:
        rng = seed.child(i).rng()
        kept = [x for x in b if rng.random() < keep_p]
        n = poisson_draw(rate, rng)
        extras = [draw_from(gen, rng) for _ in range(n)]
        return Bag.of(kept + extras)

    return PBSampler(world_fn)


# ---------------------------------------------------------------------------
# Rule programs


@dataclass(frozen=True)
class VarT:
    name: str


@dataclass(frozen=True)
class ConstT:
    value: Value


@dataclass(frozen=True)
class DistT:
    kind: str  # bernoulli | normal | poisson
    params: tuple[Union[VarT, ConstT], ...]


Term = Union[VarT, ConstT, DistT]
SimpleTerm = Union[VarT, ConstT]

_DIST_ARITY = {"bernoulli": 1, "normal": 2, "poisson": 1}


@dataclass(frozen=True)
class Atom:
    tag: str
    args: tuple[SimpleTerm, ...]


@dataclass(frozen=True)
class Guard:
    op: str  # = != < <= > >=
    left: SimpleTerm
    right: SimpleTerm


@dataclass(frozen=True)
class Rule:
    head_tag: str
    head_terms: tuple[Term, ...]
    atoms: tuple[Atom, ...]
    guards: tuple[Guard, ...]


@dataclass(frozen=True)
class RuleProgram:
    rules: tuple[Rule, ...]


def validate_program(prog: RuleProgram) -> None:
    """Structural checks: variable binding, one draw per head, no recursion
    (no cycle in the tag dependency graph)."""
    deps: dict[str, set[str]] = {}
    for r in prog.rules:
        bound = {a.name for atom in r.atoms for a in atom.args if isinstance(a, VarT)}
        dists = [t for t in r.head_terms if isinstance(t, DistT)]
        if len(dists) > 1:
            raise ProgramError(f"rule for {r.head_tag!r} has more than one distribution term")
        for t in r.head_terms:
            if isinstance(t, VarT) and t.name not in bound:
                raise ProgramError(f"head variable {t.name!r} of {r.head_tag!r} is not bound in the body")
            if isinstance(t, DistT):
                for p in t.params:
                    if isinstance(p, VarT) and p.name not in bound:
                        raise ProgramError(f"distribution parameter {p.name!r} is not bound in the body")
                    if isinstance(p, ConstT) and not isinstance(p.value, (Int, Real)):
                        raise ProgramError(f"distribution parameter {p.value!r} is not numeric")
        for g in r.guards:
            for side in (g.left, g.right):
                if isinstance(side, VarT) and side.name not in bound:
                    raise ProgramError(f"guard variable {side.name!r} is not bound in the body")
        deps.setdefault(r.head_tag, set()).update(atom.tag for atom in r.atoms)

    # recursion = a cycle among head tags (self-loops included)
    state: dict[str, int] = {}

    def visit(tag: str, trail: tuple[str, ...]) -> None:
        if state.get(tag) == 2:
            return
        if state.get(tag) == 1:
            raise ProgramError(f"recursion detected through tag {tag!r} ({' -> '.join(trail + (tag,))})")
        state[tag] = 1
        for nxt in deps.get(tag, ()):
            visit(nxt, trail + (tag,))
        state[tag] = 2

    for tag in deps:
        visit(tag, ())


def rule_matches(rule: Rule, bag: Bag) -> list[dict[str, Value]]:
    """All body instantiations against a world, in canonical order (rows
    per atom in bag order, earlier atoms vary slowest).  The position in
    this list is the match ordinal used for seed derivation."""
    by_tag: dict[str, list[Value]] = {}
    for v in bag:
        if isinstance(v, Tagged):
            by_tag.setdefault(v.tag, []).append(v.value)
    envs: list[dict[str, Value]] = [{}]
    for atom in rule.atoms:
        rows = by_tag.get(atom.tag, [])
        nxt: list[dict[str, Value]] = []
        for env in envs:
            for payload in rows:
                parts = tuple_parts(payload)
                if len(parts) != len(atom.args):
                    continue
                env2 = dict(env)
                ok = True
                for arg, val in zip(atom.args, parts):
                    if isinstance(arg, ConstT):
                        if arg.value != val:
                            ok = False
                            break
                    else:
                        bound = env2.get(arg.name)
                        if bound is None:
                            env2[arg.name] = val
                        elif bound != val:
                            ok = False
                            break
                if ok:
                    nxt.append(env2)
        envs = nxt
    return [env for env in envs if all(_guard_holds(g, env) for g in rule.guards)]


def _guard_holds(g: Guard, env: dict[str, Value]) -> bool:
    lv = _resolve(g.left, env)
    rv = _resolve(g.right, env)
    result = eval_expr(Cmp(g.op, Const(lv), Const(rv)), UNIT)
    return isinstance(result, Bool) and result.value


def _resolve(t: SimpleTerm, env: dict[str, Value]) -> Value:
    if isinstance(t, ConstT):
        return t.value
    v = env.get(t.name)
    if v is None:
        raise ProgramError(f"unbound variable {t.name!r}")
    return v


def _dist_sampler(d: DistT, env: dict[str, Value]) -> SamplerExpr:
    params: list[float] = []
    for p in d.params:
        v = _resolve(p, env) if isinstance(p, VarT) else p.value
        if not isinstance(v, (Int, Real)):
            raise EngineTypeError(f"distribution parameter {v!r} is not numeric")
        params.append(float(v.value))
    if len(params) != _DIST_ARITY[d.kind]:
        raise ProgramError(f"{d.kind} takes {_DIST_ARITY[d.kind]} parameter(s), got {len(params)}")
    if d.kind == "bernoulli":
        return Bernoulli(params[0])
    if d.kind == "normal":
        return Normal(params[0], params[1])
    return Poisson(params[0])


def _make_head(tag: str, parts: Sequence[Value]) -> Value:
    if len(parts) == 0:
        return Tagged(tag, UNIT)
    if len(parts) == 1:
        return Tagged(tag, parts[0])
    return Tagged(tag, Tuple(tuple(parts)))


def _head_options_exact(rule: Rule, env: dict[str, Value]) -> list[tuple[Value, float]]:
    """Possible head values of one match with their probabilities."""
    slots: list[Optional[Value]] = []
    dist: Optional[DistT] = None
    dist_pos = -1
    for idx, t in enumerate(rule.head_terms):
        if isinstance(t, DistT):
            dist = t
            dist_pos = idx
            slots.append(None)
        else:
            slots.append(_resolve(t, env))
    if dist is None:
        return [(_make_head(rule.head_tag, slots), 1.0)]  # type: ignore[arg-type]
    outcome = exact_of(_dist_sampler(dist, env))  # NotFiniteError for continuous heads
    options = []
    for z, w in outcome.entries:
        parts = list(slots)
        parts[dist_pos] = z
        options.append((_make_head(rule.head_tag, parts), w))  # type: ignore[arg-type]
    return options


def _head_value_mc(rule: Rule, env: dict[str, Value], seed: Seed, rule_idx: int, world_idx: int, match_idx: int) -> Value:
    parts: list[Value] = []
    for t in rule.head_terms:
        if isinstance(t, DistT):
            draw_seed = seed.child(rule_idx).child(world_idx).child(match_idx)
            parts.append(draw_from(_dist_sampler(t, env), draw_seed.rng()))
        else:
            parts.append(_resolve(t, env))
    return _make_head(rule.head_tag, parts)


def _apply_rule_exact(rule: Rule, dist: ExactDist, max_worlds: int) -> ExactDist:
    out: dict[Value, float] = {}
    processed = 0
    for world_bv, pw in dist.entries:
        if not isinstance(world_bv, BagV):
            raise EngineTypeError("rule programs run over distributions of bags")
        envs = rule_matches(rule, world_bv.bag)
        options = [_head_options_exact(rule, env) for env in envs]
        combos = 1
        for o in options:
            combos *= len(o)
        processed += combos
        if processed > max_worlds:
            raise ResourceLimitError(
                f"exact enumeration exceeds {max_worlds} worlds; rerun with the mc backend"
            )
        for combo in iproduct(*options):
            p = pw
            heads = []
            for h, w in combo:
                heads.append(h)
                p *= w
            key = BagV(world_bv.bag.uplus(Bag.of(heads)))
            out[key] = out.get(key, 0.0) + p
    return ExactDist.from_weights(out)


def run_rule_program(
    prog: RuleProgram,
    b: Bag,
    backend: str,
    seed: Optional[Seed] = None,
    max_worlds: int = DEFAULT_WORLD_LIMIT,
) -> Union[ExactDist, PBSampler]:
    """Sequential accumulation: each rule joins its body against the bag
    built so far, draws once per match, and appends its heads."""
    validate_program(prog)
    if backend == "exact":
        dist = pb_unit_bag(b)
        for rule in prog.rules:
            dist = _apply_rule_exact(rule, dist, max_worlds)
        return dist
    if backend == "mc":
        if seed is None:
            raise EngineTypeError("the mc backend needs a seed")
        rules = prog.rules

        def world_fn(i: int) -> Bag:
            w = b
            for k, rule in enumerate(rules):
                heads = [
                    _head_value_mc(rule, env, seed, k, i, j)
                    for j, env in enumerate(rule_matches(rule, w))
                ]
                w = w.uplus(Bag.of(heads))
            return w

        return PBSampler(world_fn)
    raise EngineTypeError(f"unknown backend {backend!r}; use exact or mc")


# ---------------------------------------------------------------------------
# Rule-program text format


def parse_rules(text: str) -> RuleProgram:
    """One rule per line: ``head_tag(term, ...) <- atom, ..., guard, ...``.
    Terms are variables, literals, or bernoulli/normal/poisson draws with
    variable or numeric parameters.  Blank lines and # comments skipped."""
    rules: list[Rule] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        toks = [replace(t, line=lineno) for t in tokenize(stripped)]
        rules.append(_RuleParser(toks).parse_rule())
    return RuleProgram(tuple(rules))


class _RuleParser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def fail(self, msg: str, expected: tuple[str, ...] = ()) -> ParseError:
        t = self.peek()
        return ParseError(msg, t.line, t.col, expected)

    def expect(self, kind: str, value: object = None, what: str = "") -> Token:
        t = self.peek()
        if t.kind != kind or (value is not None and t.value != value):
            found = "end of line" if t.kind == "EOF" else repr(t.value)
            raise self.fail(f"expected {what or kind}, found {found}")
        return self.next()

    def parse_rule(self) -> Rule:
        head_tag = str(self.expect("IDENT", what="a head tag").value)
        self.expect("LPAREN")
        head_terms: list[Term] = []
        if self.peek().kind != "RPAREN":
            head_terms.append(self.parse_term())
            while self.peek().kind == "COMMA":
                self.next()
                head_terms.append(self.parse_term())
        self.expect("RPAREN")
        self.expect("ARROW", what="'<-'")
        atoms: list[Atom] = []
        guards: list[Guard] = []
        if self.peek().kind != "EOF":
            self.parse_body_item(atoms, guards)
            while self.peek().kind == "COMMA":
                self.next()
                self.parse_body_item(atoms, guards)
        self.expect("EOF", what="end of rule")
        return Rule(head_tag, tuple(head_terms), tuple(atoms), tuple(guards))

    def parse_body_item(self, atoms: list[Atom], guards: list[Guard]) -> None:
        if self.peek().kind == "IDENT" and self.peek(1).kind == "LPAREN" \
                and self.peek().value not in ("true", "false", "null", "inf"):
            tag = str(self.next().value)
            self.next()  # (
            args: list[SimpleTerm] = []
            if self.peek().kind != "RPAREN":
                args.append(self.parse_simple_term())
                while self.peek().kind == "COMMA":
                    self.next()
                    args.append(self.parse_simple_term())
            self.expect("RPAREN")
            atoms.append(Atom(tag, tuple(args)))
            return
        left = self.parse_simple_term()
        t = self.peek()
        if t.kind != "OP" or t.value not in ("=", "!=", "<", "<=", ">", ">="):
            raise self.fail("expected a comparison operator in guard")
        self.next()
        right = self.parse_simple_term()
        guards.append(Guard(str(t.value), left, right))

    def parse_term(self) -> Term:
        t = self.peek()
        if t.kind == "IDENT" and self.peek(1).kind == "LPAREN":
            kind = str(t.value)
            if kind not in _DIST_ARITY:
                raise self.fail(f"unknown distribution {kind!r}", tuple(_DIST_ARITY))
            self.next()
            self.next()  # (
            params: list[SimpleTerm] = [self.parse_simple_term()]
            while self.peek().kind == "COMMA":
                self.next()
                params.append(self.parse_simple_term())
            self.expect("RPAREN")
            return DistT(kind, tuple(params))
        return self.parse_simple_term()

    def parse_simple_term(self) -> SimpleTerm:
        t = self.peek()
        if t.kind == "INT":
            self.next()
            return ConstT(Int(t.value))  # type: ignore[arg-type]
        if t.kind == "FLOAT":
            self.next()
            return ConstT(Real(t.value))  # type: ignore[arg-type]
        if t.kind == "MINUS":
            self.next()
            nxt = self.peek()
            if nxt.kind == "INT":
                self.next()
                return ConstT(Int(-nxt.value))  # type: ignore[operator]
            if nxt.kind == "FLOAT":
                self.next()
                return ConstT(Real(-nxt.value))  # type: ignore[operator]
            raise self.fail("expected a number after '-'")
        if t.kind == "STRING":
            self.next()
            return ConstT(Str(t.value))  # type: ignore[arg-type]
        if t.kind == "IDENT":
            word = str(t.value)
            self.next()
            if word == "true":
                return ConstT(Bool(True))
            if word == "false":
                return ConstT(Bool(False))
            if word == "null":
                return ConstT(UNIT)
            if word == "inf":
                return ConstT(Real(float("inf")))
            return VarT(word)
        raise self.fail("expected a variable or literal")
