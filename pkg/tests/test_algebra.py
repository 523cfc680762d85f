"""Query algebra: expression evaluation, the primitive and derived
operators, grouping, aggregation, and the multiplicity laws."""
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bagdb.algebra import (
    Agg,
    And,
    Arith,
    Cmp,
    Const,
    Dedup,
    Difference,
    DUnion,
    Field,
    Flatten,
    Group,
    GroupPrime,
    IsTag,
    Lit,
    MapQ,
    MkTagged,
    MkTuple,
    Not,
    Or,
    Payload,
    PowerBag,
    Product,
    Project,
    RowRef,
    Select,
    Singleton,
    Table,
    agg_size,
    agg_sum,
    agg_the,
    dedup_by_fold,
    difference_by_fold,
    eval_expr,
    eval_query,
    powerbag_by_fold,
    q_dedup,
    q_difference,
    q_dunion,
    q_group,
    q_group_prime,
    q_intersect,
    q_powerbag,
    q_powerset,
    q_product,
    q_project,
    q_select,
    q_union,
)
from bagdb.bags import EMPTY, Bag, counts
from bagdb.errors import (
    EmptyAggregateError,
    EngineTypeError,
    ResourceLimitError,
    UnknownTableError,
)
from bagdb.values import UNIT, BagV, Bool, Int, Real, Str, Tagged, Tuple

from strategies import small_bags_st, small_ints


def ints(*ns):
    return Bag.of([Int(n) for n in ns])


def rows(*pairs):
    return Bag.of([Tuple((Str(a), Int(b))) for a, b in pairs])


class TestExpressions:
    def test_field_is_one_based(self):
        row = Tuple((Str("a"), Int(5)))
        assert eval_expr(Field(1), row) == Str("a")
        assert eval_expr(Field(2), row) == Int(5)

    def test_scalar_row_is_one_field(self):
        assert eval_expr(Field(1), Int(9)) == Int(9)
        with pytest.raises(EngineTypeError):
            eval_expr(Field(2), Int(9))

    def test_field_out_of_range(self):
        with pytest.raises(EngineTypeError):
            eval_expr(Field(3), Tuple((Int(1), Int(2))))

    def test_rowref(self):
        assert eval_expr(RowRef(), Int(4)) == Int(4)

    def test_numeric_comparison_crosses_int_real(self):
        assert eval_expr(Cmp("=", Const(Int(2)), Const(Real(2.0))), UNIT) == Bool(True)
        assert eval_expr(Cmp("<", Const(Int(2)), Const(Real(2.5))), UNIT) == Bool(True)
        assert eval_expr(Cmp(">=", Const(Real(3.0)), Const(Int(3))), UNIT) == Bool(True)

    def test_non_numeric_comparison_uses_canonical_order(self):
        assert eval_expr(Cmp("<", Const(Str("a")), Const(Str("b"))), UNIT) == Bool(True)
        # cross-variant: Int ranks below Str
        assert eval_expr(Cmp("<", Const(Int(99)), Const(Str(""))), UNIT) == Bool(True)

    def test_arith_int_int_is_int(self):
        got = eval_expr(Arith("+", Const(Int(2)), Const(Int(3))), UNIT)
        assert got == Int(5)

    def test_arith_mixed_is_real(self):
        got = eval_expr(Arith("*", Const(Int(2)), Const(Real(1.5))), UNIT)
        assert got == Real(3.0)

    def test_arith_rejects_non_numeric(self):
        with pytest.raises(EngineTypeError):
            eval_expr(Arith("+", Const(Str("a")), Const(Int(1))), UNIT)

    def test_and_short_circuits(self):
        bad = Payload(Const(Tagged("a", Int(1))), "b")  # would raise if evaluated
        got = eval_expr(And(Const(Bool(False)), bad), UNIT)
        assert got == Bool(False)

    def test_or_short_circuits(self):
        bad = Payload(Const(Tagged("a", Int(1))), "b")
        got = eval_expr(Or(Const(Bool(True)), bad), UNIT)
        assert got == Bool(True)

    def test_logic_is_strict_on_bools(self):
        with pytest.raises(EngineTypeError):
            eval_expr(And(Const(Int(1)), Const(Bool(True))), UNIT)
        with pytest.raises(EngineTypeError):
            eval_expr(Not(Const(Int(0))), UNIT)

    def test_istag(self):
        row = Tagged("cast", Str("x"))
        assert eval_expr(IsTag(RowRef(), "cast"), row) == Bool(True)
        assert eval_expr(IsTag(RowRef(), "gross"), row) == Bool(False)
        assert eval_expr(IsTag(Const(Int(1)), "cast"), UNIT) == Bool(False)

    def test_payload(self):
        row = Tagged("cast", Str("x"))
        assert eval_expr(Payload(RowRef(), "cast"), row) == Str("x")

    def test_payload_wrong_tag_raises(self):
        with pytest.raises(EngineTypeError):
            eval_expr(Payload(Const(Tagged("a", Int(1))), "b"), UNIT)

    def test_mktuple_mktagged(self):
        got = eval_expr(MkTuple((Const(Int(1)), Const(Str("s")))), UNIT)
        assert got == Tuple((Int(1), Str("s")))
        assert eval_expr(MkTagged("t", ()), UNIT) == Tagged("t", UNIT)
        assert eval_expr(MkTagged("t", (Const(Int(1)),)), UNIT) == Tagged("t", Int(1))
        got = eval_expr(MkTagged("t", (Const(Int(1)), Const(Int(2)))), UNIT)
        assert got == Tagged("t", Tuple((Int(1), Int(2))))


class TestPrimitives:
    def test_product_concatenates_rows(self):
        left = rows(("a", 1), ("b", 2))
        right = ints(10)
        got = q_product(left, right)
        assert got == Bag.of(
            [
                Tuple((Str("a"), Int(1), Int(10))),
                Tuple((Str("b"), Int(2), Int(10))),
            ]
        )

    def test_product_multiplicities_multiply(self):
        got = q_product(ints(1, 1), ints(2, 2, 2))
        assert got.size == 6
        assert got.count(Tuple((Int(1), Int(2)))) == 6

    def test_product_requires_uniform_arity(self):
        mixed = Bag.of([Int(1), Tuple((Int(1), Int(2)))])
        with pytest.raises(EngineTypeError):
            q_product(mixed, ints(1))

    def test_project_single_index_is_scalar(self):
        got = q_project((2,), rows(("a", 1), ("b", 2)))
        assert got == ints(1, 2)

    def test_project_multi_keeps_tuple(self):
        got = q_project((2, 1), rows(("a", 1)))
        assert got == Bag.of([Tuple((Int(1), Str("a")))])

    def test_project_out_of_range(self):
        with pytest.raises(EngineTypeError):
            q_project((3,), rows(("a", 1)))

    def test_select(self):
        pred = Cmp(">", Field(2), Const(Int(1)))
        assert q_select(pred, rows(("a", 1), ("b", 2))) == rows(("b", 2))

    def test_select_requires_bool(self):
        with pytest.raises(EngineTypeError):
            q_select(Field(1), ints(1, 2))

    def test_dunion(self):
        assert q_dunion(ints(1, 2), ints(2, 3)) == ints(1, 2, 2, 3)

    def test_difference_is_truncated(self):
        assert q_difference(ints(1, 2, 2, 3), ints(2, 3, 3, 4)) == ints(1, 2)
        assert q_difference(ints(1), ints(1, 1)) == EMPTY

    def test_dedup(self):
        assert q_dedup(ints(1, 1, 2, 2, 2)) == ints(1, 2)

    def test_powerbag_of_two(self):
        got = q_powerbag(ints(1, 2))
        expected = Bag.of(
            [BagV(EMPTY), BagV(ints(1)), BagV(ints(2)), BagV(ints(1, 2))]
        )
        assert got == expected

    def test_powerbag_duplicates(self):
        got = q_powerbag(ints(1, 1))
        assert got.count(BagV(ints(1))) == 2
        assert got.count(BagV(ints(1, 1))) == 1
        assert got.size == 4

    def test_powerbag_guard(self):
        with pytest.raises(ResourceLimitError):
            q_powerbag(ints(*range(5)), max_results=16)

    def test_union_max(self):
        assert q_union(ints(1, 1, 2), ints(1, 3)) == ints(1, 1, 2, 3)

    def test_intersect_min(self):
        assert q_intersect(ints(1, 1, 2), ints(1, 2, 2, 3)) == ints(1, 2)

    def test_powerset_distinct_subbags(self):
        got = q_powerset(ints(1, 1))
        assert got == Bag.of([BagV(EMPTY), BagV(ints(1)), BagV(ints(1, 1))])


class TestDualRoutes:
    @given(small_bags_st, small_bags_st)
    def test_difference_by_fold(self, a, b):
        assert difference_by_fold(a, b) == q_difference(a, b)

    @given(small_bags_st)
    def test_dedup_by_fold(self, b):
        assert dedup_by_fold(b) == q_dedup(b)

    @given(small_bags_st)
    def test_powerbag_by_fold(self, b):
        assert powerbag_by_fold(b) == q_powerbag(b)


class TestMultiplicityLaws:
    @given(small_bags_st, small_bags_st, small_ints)
    def test_dunion_counts_add(self, a, b, x):
        assert q_dunion(a, b).count(x) == a.count(x) + b.count(x)

    @given(small_bags_st, small_bags_st, small_ints)
    def test_difference_counts_truncate(self, a, b, x):
        assert q_difference(a, b).count(x) == max(a.count(x) - b.count(x), 0)

    @given(small_bags_st, small_bags_st, small_ints)
    def test_union_counts_max(self, a, b, x):
        assert q_union(a, b).count(x) == max(a.count(x), b.count(x))

    @given(small_bags_st, small_bags_st, small_ints)
    def test_intersect_counts_min(self, a, b, x):
        assert q_intersect(a, b).count(x) == min(a.count(x), b.count(x))

    @given(small_bags_st, small_ints)
    def test_dedup_counts_clamp(self, b, x):
        assert q_dedup(b).count(x) == min(b.count(x), 1)

    @given(small_bags_st, small_bags_st, small_ints, small_ints)
    def test_product_counts_multiply(self, a, b, x, y):
        got = q_product(a, b).count(Tuple((x, y)))
        assert got == a.count(x) * b.count(y)

    @given(small_bags_st)
    def test_powerbag_size(self, b):
        assert q_powerbag(b).size == 2**b.size

    @given(small_bags_st)
    def test_powerbag_multiplicity_is_binomial_product(self, b):
        pb = q_powerbag(b)
        base = dict(counts(b))
        for sub, got in counts(pb):
            expect = 1
            for v, k in counts(sub.bag):
                expect *= math.comb(base.get(v, 0), k)
            assert got == expect


class TestGrouping:
    def test_group_collects_values_by_key(self):
        b = rows(("a", 1), ("a", 2), ("b", 3))
        got = q_group((1,), (2,), b)
        assert got == Bag.of(
            [
                Tuple((Str("a"), BagV(ints(1, 2)))),
                Tuple((Str("b"), BagV(ints(3)))),
            ]
        )

    def test_group_key_multiplicity_once_per_key(self):
        b = rows(("a", 1), ("a", 1))
        got = q_group((1,), (2,), b)
        assert got.size == 1
        assert got == Bag.of([Tuple((Str("a"), BagV(ints(1, 1))))])

    def test_group_multi_key(self):
        b = Bag.of([Tuple((Str("a"), Int(1), Int(10)))])
        got = q_group((1, 2), (3,), b)
        assert got == Bag.of(
            [Tuple((Tuple((Str("a"), Int(1))), BagV(ints(10))))]
        )

    def test_group_prime_runs_of_equal_elements(self):
        got = q_group_prime(ints(1, 1, 2))
        assert got == Bag.of([BagV(ints(1, 1)), BagV(ints(2))])

    def test_group_prime_empty(self):
        assert q_group_prime(EMPTY) == EMPTY

    @given(small_bags_st)
    def test_group_prime_flattens_back(self, b):
        assert q_group_prime(b).flatten() == b


class TestAggregates:
    def test_size(self):
        assert agg_size(ints(5, 5, 5)) == Int(3)
        assert agg_size(EMPTY) == Int(0)

    def test_the_of_singleton(self):
        assert agg_the(ints(7)) == Int(7)

    def test_the_picks_canonical_first(self):
        assert agg_the(ints(3, 1, 2)) == Int(1)

    def test_the_of_empty_raises(self):
        with pytest.raises(EmptyAggregateError):
            agg_the(EMPTY)

    def test_sum_ints(self):
        assert agg_sum(ints(1, 2, 3)) == Int(6)

    def test_sum_mixed_is_real(self):
        assert agg_sum(Bag.of([Int(1), Real(0.5)])) == Real(1.5)

    def test_sum_empty_is_int_zero(self):
        assert agg_sum(EMPTY) == Int(0)

    def test_sum_rejects_non_numeric(self):
        with pytest.raises(EngineTypeError):
            agg_sum(Bag.of([Str("x")]))


class TestEvalQuery:
    def test_table_lookup(self):
        env = {"t": ints(1, 2)}
        assert eval_query(Table("t"), env) == BagV(ints(1, 2))

    def test_unknown_table(self):
        with pytest.raises(UnknownTableError):
            eval_query(Table("nope"), {})

    def test_composite_pipeline(self):
        env = {"t": rows(("a", 1), ("b", 2), ("c", 3))}
        q = Project((1,), Select(Cmp(">=", Field(2), Const(Int(2))), Table("t")))
        assert eval_query(q, env) == BagV(Bag.of([Str("b"), Str("c")]))

    def test_map_query(self):
        q = MapQ(Arith("+", RowRef(), Const(Int(1))), Lit(ints(1, 2)))
        assert eval_query(q, {}) == BagV(ints(2, 3))

    def test_singleton_and_flatten(self):
        q = Singleton(Lit(ints(1, 2)))
        got = eval_query(q, {})
        assert got == BagV(Bag.of([BagV(ints(1, 2))]))
        assert eval_query(Flatten(q), {}) == BagV(ints(1, 2))

    def test_group_query_scalar_key(self):
        env = {"t": rows(("a", 1), ("a", 2))}
        got = eval_query(Group((1,), (2,), Table("t")), env)
        assert got == BagV(Bag.of([Tuple((Str("a"), BagV(ints(1, 2))))]))

    def test_agg_query(self):
        assert eval_query(Agg("sum", Lit(ints(1, 2, 3))), {}) == Int(6)
        assert eval_query(Agg("size", Lit(EMPTY)), {}) == Int(0)
        assert eval_query(Agg("the", Lit(ints(9))), {}) == Int(9)

    def test_powerbag_limit_flows_through(self):
        with pytest.raises(ResourceLimitError):
            eval_query(PowerBag(Lit(ints(*range(6)))), {}, max_powerbag=8)

    def test_nested_set_ops(self):
        q = Difference(DUnion(Lit(ints(1, 2)), Lit(ints(2))), Lit(ints(2)))
        assert eval_query(q, {}) == BagV(ints(1, 2))

    def test_dedup_and_group_prime_nodes(self):
        assert eval_query(Dedup(Lit(ints(1, 1))), {}) == BagV(ints(1))
        got = eval_query(GroupPrime(Lit(ints(1, 1, 2))), {})
        assert got == BagV(Bag.of([BagV(ints(1, 1)), BagV(ints(2))]))
