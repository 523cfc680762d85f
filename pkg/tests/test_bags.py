"""Canonical multisets: monoid structure, fold, and the monad operations."""
import random

from hypothesis import given
from hypothesis import strategies as st

from bagdb.bags import (
    EMPTY,
    Bag,
    counts,
    free_extend,
    strength,
    unit,
    uplus_by_fold,
)
from bagdb.values import BagV, Int, Str, Tuple

from strategies import bags, small_bags_st, small_ints, values


def ints(*ns):
    return Bag.of([Int(n) for n in ns])


class TestCanonicalForm:
    def test_of_sorts(self):
        assert ints(3, 1, 2).elements == (Int(1), Int(2), Int(3))

    def test_duplicates_kept(self):
        assert ints(2, 1, 2).elements == (Int(1), Int(2), Int(2))

    @given(st.lists(values, max_size=6))
    def test_order_of_construction_irrelevant(self, xs):
        shuffled = list(xs)
        random.Random(0).shuffle(shuffled)
        assert Bag.of(xs) == Bag.of(shuffled)
        assert hash(Bag.of(xs)) == hash(Bag.of(shuffled))

    def test_count(self):
        b = ints(1, 2, 2, 3)
        assert b.count(Int(2)) == 2
        assert b.count(Int(9)) == 0

    def test_add_keeps_order(self):
        assert ints(1, 3).add(Int(2)) == ints(1, 2, 3)
        assert ints(1, 2, 3).add(Int(2)) == ints(1, 2, 2, 3)

    def test_remove_one_copy(self):
        assert ints(1, 2, 2, 3).remove(Int(2)) == ints(1, 2, 3)

    def test_remove_absent_is_identity(self):
        b = ints(1, 2)
        assert b.remove(Int(9)) is b

    @given(small_bags_st, small_ints)
    def test_add_then_remove_round_trips(self, b, x):
        assert b.add(x).remove(x) == b

    @given(small_bags_st, small_ints)
    def test_count_after_add(self, b, x):
        assert b.add(x).count(x) == b.count(x) + 1


class TestMonoid:
    def test_uplus_multiplicities_add(self):
        assert ints(1, 2).uplus(ints(2, 3)) == ints(1, 2, 2, 3)

    @given(small_bags_st, small_bags_st)
    def test_uplus_commutative(self, a, b):
        assert a.uplus(b) == b.uplus(a)

    @given(small_bags_st, small_bags_st, small_bags_st)
    def test_uplus_associative(self, a, b, c):
        assert a.uplus(b).uplus(c) == a.uplus(b.uplus(c))

    @given(small_bags_st)
    def test_empty_identity(self, b):
        assert b.uplus(EMPTY) == b
        assert EMPTY.uplus(b) == b

    @given(small_bags_st, small_bags_st)
    def test_uplus_by_fold_agrees(self, a, b):
        assert uplus_by_fold(a, b) == a.uplus(b)


class TestFold:
    def test_fold_is_right_fold_in_canonical_order(self):
        got = ints(3, 1, 2).fold(lambda x, acc: [x.value] + acc, [])
        assert got == [1, 2, 3]

    def test_fold_empty_returns_init(self):
        sentinel = object()
        assert EMPTY.fold(lambda x, a: a, sentinel) is sentinel

    def test_commutative_fold_ignores_permutations(self):
        xs = [Int(5), Int(-1), Int(3), Int(5), Int(0), Int(2)]
        rng = random.Random(42)
        totals = set()
        for _ in range(20):
            rng.shuffle(xs)
            totals.add(Bag.of(xs).fold(lambda x, acc: acc + x.value, 0))
        assert totals == {14}

    @given(small_bags_st)
    def test_fold_counts_size(self, b):
        assert b.fold(lambda x, n: n + 1, 0) == b.size


class TestMonad:
    def test_unit(self):
        assert unit(Int(7)) == ints(7)

    def test_flatten(self):
        b = Bag.of([BagV(ints(1, 2)), BagV(ints(2, 3)), BagV(EMPTY)])
        assert b.flatten() == ints(1, 2, 2, 3)

    def test_flatten_rejects_non_bag(self):
        import pytest

        with pytest.raises(Exception):
            ints(1).flatten()

    def test_bind_example(self):
        dup = lambda x: Bag.of([x, x])
        assert ints(1, 2).bind(dup) == ints(1, 1, 2, 2)

    @given(small_ints)
    def test_left_identity(self, x):
        f = lambda v: ints(v.value, v.value + 1)
        assert unit(x).bind(f) == f(x)

    @given(small_bags_st)
    def test_right_identity(self, b):
        assert b.bind(unit) == b

    @given(small_bags_st)
    def test_associativity(self, b):
        f = lambda v: ints(v.value, -v.value)
        g = lambda v: ints(v.value * 2)
        assert b.bind(f).bind(g) == b.bind(lambda v: f(v).bind(g))

    @given(small_bags_st)
    def test_map_via_bind(self, b):
        f = lambda v: Int(v.value + 1)
        assert b.map(f) == b.bind(lambda v: unit(f(v)))

    @given(small_bags_st, small_bags_st)
    def test_bind_distributes_over_uplus(self, a, b):
        f = lambda v: ints(v.value, 0)
        assert a.uplus(b).bind(f) == a.bind(f).uplus(b.bind(f))

    def test_strength(self):
        got = strength(Str("k"), ints(2, 1))
        assert got == Bag.of([Tuple((Str("k"), Int(1))), Tuple((Str("k"), Int(2)))])

    @given(small_bags_st)
    def test_strength_size(self, b):
        assert strength(Int(0), b).size == b.size


class TestFreeExtension:
    def test_sum_homomorphism(self):
        total = free_extend(lambda v: v.value, lambda a, b: a + b, 0, ints(1, 2, 3))
        assert total == 6

    def test_size_homomorphism(self):
        assert free_extend(lambda v: 1, lambda a, b: a + b, 0, ints(4, 4, 4)) == 3

    @given(small_bags_st, small_bags_st)
    def test_respects_uplus(self, a, b):
        h = lambda bag: free_extend(lambda v: v.value, lambda x, y: x + y, 0, bag)
        assert h(a.uplus(b)) == h(a) + h(b)

    @given(small_bags_st)
    def test_extends_f_on_singletons(self, b):
        f = lambda v: [v.value]
        h = free_extend(f, lambda x, y: x + y, [], b)
        assert h == [x.value for x in b.elements]


class TestCounts:
    def test_counts(self):
        assert counts(ints(2, 1, 2)) == [(Int(1), 1), (Int(2), 2)]

    @given(small_bags_st)
    def test_counts_total(self, b):
        assert sum(n for _, n in counts(b)) == b.size
