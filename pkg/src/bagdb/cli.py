"""Command-line front end.

Three subcommands: ``query`` evaluates a deterministic query over JSONL
tables, ``generate`` runs a generative rule program and emits worlds
(exact weights or Monte-Carlo samples), ``estimate`` pushes a query
through sampled worlds and reports a statistic.  All output is
deterministic given inputs, seed and flags; worker count never changes
results.

Exit codes: 0 ok, 1 usage, 2 parse error, 3 type/schema error,
4 resource limit, 5 infinite-support request on the exact backend.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional

from .algebra import eval_query
from .bags import EMPTY, Bag
from .dsl import check, parse
from .errors import (
    EmptyAggregateError,
    EngineError,
    EngineTypeError,
    NotFiniteError,
    ParseError,
    ProgramError,
    ResourceLimitError,
    SchemaError,
    WorldEvalError,
)
from .pbmonad import PBSampler, parse_rules, run_rule_program
from .prob import ExactDist, Seed
from .values import (
    BagV,
    Int,
    Real,
    Schema,
    Value,
    deserialize,
    infer_schema,
    to_json,
    typecheck,
    unify_schema,
)

WORLD_TABLE = "world"


# ---------------------------------------------------------------------------
# Ingestion


def load_table(path: Path) -> tuple[Optional[Schema], Bag]:
    """Read one JSONL file: a Value per line.  The row schema is inferred
    from all rows, then every row is checked against it."""
    rows: list[Value] = []
    schema: Optional[Schema] = None
    text = path.read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            v = deserialize(line)
        except ParseError as e:
            raise ParseError(f"{path.name}: {e.message}", lineno, e.column) from None
        except EngineTypeError as e:
            raise SchemaError(f"{path.name}:{lineno}: {e}") from None
        rows.append(v)
        s = infer_schema(v)
        try:
            schema = s if schema is None else unify_schema(schema, s)
        except SchemaError as e:
            raise SchemaError(f"{path.name}:{lineno}: {e}") from None
    if schema is not None:
        for v in rows:
            if not typecheck(v, schema):
                raise SchemaError(f"{path.name}: row {v!r} does not match the inferred schema")
    return schema, Bag.of(rows)


def load_catalog(paths: list[str]) -> dict[str, tuple[Optional[Schema], Bag]]:
    catalog: dict[str, tuple[Optional[Schema], Bag]] = {}
    for p in paths:
        path = Path(p)
        name = path.stem
        if name in catalog:
            raise EngineTypeError(f"duplicate table name {name!r} from {p}")
        catalog[name] = load_table(path)
    return catalog


# ---------------------------------------------------------------------------
# Subcommands


def cmd_query(args) -> int:
    catalog = load_catalog(args.db)
    ast = parse(Path(args.query).read_text(encoding="utf-8"))
    check(ast, {name: schema for name, (schema, _) in catalog.items()})
    result = eval_query(ast, {name: bag for name, (_, bag) in catalog.items()})
    _emit(args.output, to_json(result))
    return 0


def _merged_input(catalog) -> Bag:
    merged = EMPTY
    for _, bag in catalog.values():
        merged = merged.uplus(bag)
    return merged


def cmd_generate(args) -> int:
    catalog = load_catalog(args.db)
    prog = parse_rules(Path(args.program).read_text(encoding="utf-8"))
    base = _merged_input(catalog)
    if args.backend == "exact":
        dist = run_rule_program(prog, base, "exact")
        assert isinstance(dist, ExactDist)
        payload = {
            "backend": "exact",
            "worlds": [{"weight": w, "world": to_json(v)} for v, w in dist.entries],
        }
    else:
        seed = Seed(args.seed)
        sampler = run_rule_program(prog, base, "mc", seed=seed)
        assert isinstance(sampler, PBSampler)
        worlds = sampler.worlds(args.samples, workers=args.workers)
        payload = {
            "backend": "mc",
            "samples": args.samples,
            "seed": args.seed,
            "worlds": [to_json(BagV(w)) for w in worlds],
        }
    _emit(args.output, payload)
    return 0


def cmd_estimate(args) -> int:
    catalog = load_catalog(args.db)
    prog = parse_rules(Path(args.program).read_text(encoding="utf-8"))
    ast = parse(Path(args.query).read_text(encoding="utf-8"))
    check(ast, {WORLD_TABLE: None})
    seed = Seed(args.seed)
    sampler = run_rule_program(prog, _merged_input(catalog), "mc", seed=seed)
    assert isinstance(sampler, PBSampler)
    worlds = sampler.worlds(args.samples, workers=args.workers)
    results: list[Value] = []
    for w in worlds:
        try:
            results.append(eval_query(ast, {WORLD_TABLE: w}))
        except EngineError as e:
            raise WorldEvalError(BagV(w), e) from e
    n = args.samples
    payload = {"stat": args.stat, "samples": n, "seed": args.seed}
    if args.stat == "tuple-prob":
        payload["results"] = _stat_tuple_prob(results, n)
    elif args.stat == "mean":
        payload.update(_stat_mean(results))
    else:
        payload["results"] = _stat_dist(results, n)
    _emit(args.output, payload)
    return 0


def _ci3(phat: float, n: int) -> float:
    return 3.0 * math.sqrt(phat * (1.0 - phat) / n)


def _stat_tuple_prob(results: list[Value], n: int) -> list[dict]:
    presence: dict[Value, int] = {}
    for r in results:
        distinct = set(r.bag.elements) if isinstance(r, BagV) else {r}
        for v in distinct:
            presence[v] = presence.get(v, 0) + 1
    out = []
    for v in sorted(presence, key=lambda v: v.key):
        phat = presence[v] / n
        out.append({"value": to_json(v), "p": phat, "ci3": _ci3(phat, n)})
    return out


def _stat_mean(results: list[Value]) -> dict:
    nums: list[float] = []
    for r in results:
        elems = r.bag.elements if isinstance(r, BagV) else (r,)
        for el in elems:
            if not isinstance(el, (Int, Real)):
                raise EngineTypeError(f"mean statistic needs numeric results, got {el!r}")
            nums.append(float(el.value))
    if not nums:
        raise EngineTypeError("mean statistic over no numeric data")
    count = len(nums)
    mean = math.fsum(nums) / count
    var = math.fsum((x - mean) ** 2 for x in nums) / (count - 1) if count > 1 else 0.0
    stddev = math.sqrt(var)
    return {"n": count, "mean": mean, "stddev": stddev, "ci3": 3.0 * stddev / math.sqrt(count)}


def _stat_dist(results: list[Value], n: int) -> list[dict]:
    tally: dict[Value, int] = {}
    for r in results:
        tally[r] = tally.get(r, 0) + 1
    out = []
    for v in sorted(tally, key=lambda v: v.key):
        phat = tally[v] / n
        out.append({"value": to_json(v), "p": phat, "ci3": _ci3(phat, n)})
    return out


def _emit(output: str, payload) -> None:
    text = json.dumps(payload, sort_keys=True)
    if output == "-":
        sys.stdout.write(text + "\n")
    else:
        Path(output).write_text(text + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Argument parsing and dispatch


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="bagdb", description="bag-semantics probabilistic database engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_db(p):
        p.add_argument("--db", action="append", required=True, metavar="FILE",
                       help="JSONL table file; the file stem is the table name (repeatable)")
        p.add_argument("--output", default="-", metavar="FILE|-", help="output path (default stdout)")

    q = sub.add_parser("query", help="evaluate a deterministic query")
    common_db(q)
    q.add_argument("--query", required=True, metavar="FILE")
    q.set_defaults(fn=cmd_query)

    g = sub.add_parser("generate", help="run a generative rule program")
    common_db(g)
    g.add_argument("--program", required=True, metavar="FILE")
    g.add_argument("--backend", choices=("exact", "mc"), default="exact")
    g.add_argument("--samples", type=int, default=1000, metavar="N")
    g.add_argument("--seed", type=int, default=0, metavar="U64")
    g.add_argument("--workers", type=int, default=1, metavar="K")
    g.set_defaults(fn=cmd_generate)

    e = sub.add_parser("estimate", help="estimate a statistic of a query over sampled worlds")
    common_db(e)
    e.add_argument("--program", required=True, metavar="FILE")
    e.add_argument("--query", required=True, metavar="FILE",
                   help=f"query over the per-world table named {WORLD_TABLE!r}")
    e.add_argument("--samples", type=int, default=10000, metavar="N")
    e.add_argument("--seed", type=int, default=0, metavar="U64")
    e.add_argument("--stat", choices=("tuple-prob", "mean", "dist"), default="tuple-prob")
    e.add_argument("--workers", type=int, default=1, metavar="K")
    e.set_defaults(fn=cmd_estimate)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if getattr(args, "samples", 1) < 1:
        print("bagdb: error: --samples must be at least 1", file=sys.stderr)
        return 1
    if not (0 <= getattr(args, "seed", 0) < 2**64):
        print("bagdb: error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 1
    if getattr(args, "workers", 1) < 1:
        print("bagdb: error: --workers must be at least 1", file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except ParseError as e:
        print(f"bagdb: parse error: {e}", file=sys.stderr)
        return 2
    except WorldEvalError as e:
        print(f"bagdb: {e}", file=sys.stderr)
        return _code_for(e.cause)
    except NotFiniteError as e:
        print(f"bagdb: {e} (hint: use --backend mc)", file=sys.stderr)
        return 5
    except ResourceLimitError as e:
        print(f"bagdb: resource limit: {e}", file=sys.stderr)
        return 4
    except EngineError as e:
        print(f"bagdb: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"bagdb: {e}", file=sys.stderr)
        return 1


def _code_for(e: EngineError) -> int:
    if isinstance(e, ParseError):
        return 2
    if isinstance(e, NotFiniteError):
        return 5
    if isinstance(e, ResourceLimitError):
        return 4
    return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
