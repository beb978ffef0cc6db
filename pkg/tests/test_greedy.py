from fractions import Fraction

import numpy as np
import pytest

from contractmatch.errors import ValidationError
from contractmatch.greedy import greedy_diversified, greedy_pairwise, pair_value, subset_value
from contractmatch.model import (
    Allocation, BuyContractType, ProblemInstance, SellContractType, generate_instance, tiny_instance,
)
from contractmatch.recourse import evaluate_exact, solve_exact

TINY = tiny_instance()


def _instance(buys, sells, edges):
    return ProblemInstance(
        tuple(BuyContractType(f"b{u}", *b) for u, b in enumerate(buys)),
        tuple(SellContractType(f"s{i}", *s) for i, s in enumerate(sells)),
        tuple(edges),
    )


def test_tiny_pair_values():
    assert pair_value(TINY, 0, 0) == pytest.approx(2.0)
    assert pair_value(TINY, 1, 0) == pytest.approx(-3.0)
    with pytest.raises(ValidationError):
        pair_value(_instance([(1, 0.1, 1)] * 2, [(4, 6, 1)], [(0, 0)]), 1, 0)


def test_reliable_pair_value():
    inst = _instance([(1.5, 0.0, 1)], [(4.25, 9, 1)], [(0, 0)])
    assert pair_value(inst, 0, 0) == pytest.approx(4.25 - 1.5)


def test_subset_values():
    assert subset_value(TINY, {0, 1}, 0) == pytest.approx(0.5)
    assert subset_value(TINY, {0}, 0) == pytest.approx(pair_value(TINY, 0, 0))
    inst = _instance([(1, 0.0, 1), (2, 0.7, 1)], [(6, 10, 1)], [(0, 0), (1, 0)])
    assert subset_value(inst, {0, 1}, 0) == pytest.approx(6 - 3)
    with pytest.raises(ValidationError):
        subset_value(TINY, set(), 0)
    with pytest.raises(ValidationError):
        subset_value(inst, {0}, 3)


@pytest.mark.parametrize("seed", range(5))
def test_subset_value_matches_exact_rational(seed):
    inst = generate_instance(4, 2, 1.0, rng_seed=seed)
    for i in range(inst.k):
        subset = inst.incident_buys(i)
        p_all = Fraction(1)
        cost = Fraction(0)
        for u in subset:
            p_all *= Fraction(str(inst.buys[u].fail_prob))
            cost += Fraction(str(inst.buys[u].price))
        s = inst.sells[i]
        want = -cost + (1 - p_all) * Fraction(str(s.price)) - p_all * Fraction(str(s.penalty))
        assert subset_value(inst, subset, i) == pytest.approx(float(want), abs=1e-12)


def test_greedies_on_tiny():
    assert greedy_pairwise(TINY) == Allocation((1, 0), (1,))
    assert greedy_diversified(TINY) == Allocation((1, 0), (1,))


def test_nothing_profitable():
    inst = _instance([(5, 0.5, 2)], [(4, 6, 2)], [(0, 0)])
    assert greedy_pairwise(inst).is_zero
    assert greedy_diversified(inst).is_zero


def test_pairwise_capacity_exhaustion():
    # one capacity-1 buy; covering sell 0 is worth 3, sell 1 is worth 2
    inst = _instance([(1, 0.0, 1)], [(4, 1, 1), (3, 1, 1)], [(0, 0), (0, 1)])
    assert pair_value(inst, 0, 0) == pytest.approx(3.0)
    assert pair_value(inst, 0, 1) == pytest.approx(2.0)
    assert greedy_pairwise(inst) == Allocation((1,), (1, 0))


def test_pairwise_fills_capacity():
    inst = _instance([(1, 0.1, 3), (1, 0.1, 5)], [(4, 6, 4)], [(0, 0), (1, 0)])
    alloc = greedy_pairwise(inst)
    assert alloc.m == (4,)
    assert alloc.n == (3, 1)


def test_diversified_prefers_a_covering_pair():
    # two cheap coin-flip buys and a costly breach: hedging with both beats either alone
    inst = _instance([(1, 0.5, 1), (1, 0.5, 1)], [(10, 10, 1)], [(0, 0), (1, 0)])
    single = pair_value(inst, 0, 0)
    assert subset_value(inst, {0, 1}, 0) > single
    alloc = greedy_diversified(inst)
    assert alloc == Allocation((1, 1), (1,))
    assert greedy_pairwise(inst).is_zero  # each single pair loses money


def test_subset_limit():
    inst = _instance([(1, 0.1, 1)] * 3, [(4, 6, 1)], [(0, 0), (1, 0), (2, 0)])
    with pytest.raises(ValidationError):
        greedy_diversified(inst, subset_limit=2)


def test_pair_ties_go_to_lower_sell_then_lower_buy():
    inst = _instance([(1, 0.0, 1), (1, 0.0, 1)], [(4, 1, 1), (4, 1, 1)],
                     [(0, 0), (0, 1), (1, 0), (1, 1)])
    assert greedy_pairwise(inst) == Allocation((1, 1), (1, 1))
    inst = _instance([(1, 0.0, 1)], [(4, 1, 1), (4, 1, 1)], [(0, 0), (0, 1)])
    assert greedy_pairwise(inst) == Allocation((1,), (1, 0))
    assert greedy_diversified(inst) == Allocation((1,), (1, 0))


@pytest.mark.parametrize("seed", range(15))
def test_greedies_never_beat_the_optimum(seed):
    rng = np.random.default_rng(seed)
    inst = generate_instance(int(rng.integers(1, 7)), int(rng.integers(1, 5)), 0.5, rng_seed=seed)
    best = solve_exact(inst).objective_value
    for greedy in (greedy_pairwise, greedy_diversified):
        alloc = greedy(inst)
        alloc.validate_for(inst)
        assert evaluate_exact(inst, alloc) <= best + 1e-6
        assert greedy(inst) == alloc  # deterministic


@pytest.mark.parametrize("seed", range(15))
def test_diversified_only_uses_connected_buys(seed):
    inst = generate_instance(6, 4, 0.4, rng_seed=seed)
    alloc = greedy_diversified(inst)
    chosen = {i for i in range(inst.k) if alloc.m[i] > 0}
    for u in range(inst.q):
        if alloc.n[u] > 0:
            assert set(inst.incident_sells(u)) & chosen
