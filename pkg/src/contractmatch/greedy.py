"""Greedy portfolio baselines: pairwise matching and per-sell diversified coverage."""

from __future__ import annotations

import itertools
import math
from typing import Iterable

from .errors import ValidationError
from .model import Allocation, ProblemInstance

SUBSET_SEARCH_LIMIT = 20


def pair_value(instance: ProblemInstance, u: int, i: int) -> float:
    """Expected profit of covering one unit of sell ``i`` with one unit of buy ``u``.

    ``-R^b_u + (1 - p_u) R^s_i - p_u * penalty_i``
    """
    if (u, i) not in set(instance.edges):
        raise ValidationError(f"({u}, {i}) is not an admissible edge", "pair")
    buy, sell = instance.buys[u], instance.sells[i]
    p = buy.fail_prob
    return -buy.price + (1.0 - p) * sell.price - p * sell.penalty


def subset_value(instance: ProblemInstance, subset: Iterable[int], i: int) -> float:
    """Expected profit of covering one unit of sell ``i`` with one unit of every buy in ``subset``.

    The sell is breached only when all buys in the subset fail.
    """
    subset = tuple(sorted(set(subset)))
    if not subset:
        raise ValidationError("subset must be nonempty", "subset")
    if not 0 <= i < instance.k:
        raise ValidationError(f"sell index {i} out of range", "sell")
    incident = set(instance.incident_buys(i))
    stray = [u for u in subset if u not in incident]
    if stray:
        raise ValidationError(f"buys {stray} are not incident on sell {i}", "subset")
    sell = instance.sells[i]
    p_all = math.prod(instance.buys[u].fail_prob for u in subset)
    cost = sum(instance.buys[u].price for u in subset)
    return -cost + (1.0 - p_all) * sell.price - p_all * sell.penalty


def greedy_pairwise(instance: ProblemInstance) -> Allocation:
    """Take buy-sell pairs in order of decreasing :func:`pair_value`, filling capacity, while values stay positive."""
    pairs = sorted(instance.edges, key=lambda e: (-pair_value(instance, *e), e[1], e[0]))
    n_left = [b.capacity for b in instance.buys]
    m_left = [s.capacity for s in instance.sells]
    n = [0] * instance.q
    m = [0] * instance.k
    for u, i in pairs:
        if pair_value(instance, u, i) <= 0.0:
            break
        t = min(n_left[u], m_left[i])
        if t <= 0:
            continue
        n[u] += t
        m[i] += t
        n_left[u] -= t
        m_left[i] -= t
    return Allocation(tuple(n), tuple(m))


def _best_subset(instance: ProblemInstance, i: int, candidates: tuple[int, ...]):
    best = None
    for size in range(1, len(candidates) + 1):
        for subset in itertools.combinations(candidates, size):
            value = subset_value(instance, subset, i)
            # ties: keep the lexicographically smaller buy set
            if best is None or value > best[0] or (value == best[0] and subset < best[1]):
                best = (value, subset)
    return best


def greedy_diversified(instance: ProblemInstance, subset_limit: int = SUBSET_SEARCH_LIMIT) -> Allocation:
    """Repeatedly cover the sell whose best buy subset has the highest positive value.

    Each round allocates ``min(sell capacity left, min buy capacity left over the subset)``
    units, with one unit of every subset member per sell unit.
    """
    widest = max(len(instance.incident_buys(i)) for i in range(instance.k))
    if widest > subset_limit:
        raise ValidationError(f"a sell has {widest} incident buys; subset search limit is {subset_limit}", "edges")
    n_left = [b.capacity for b in instance.buys]
    m_left = [s.capacity for s in instance.sells]
    n = [0] * instance.q
    m = [0] * instance.k
    while True:
        choice = None
        for i in range(instance.k):
            if m_left[i] <= 0:
                continue
            candidates = tuple(u for u in instance.incident_buys(i) if n_left[u] > 0)
            if not candidates:
                continue
            value, subset = _best_subset(instance, i, candidates)
            if choice is None or value > choice[0]:
                choice = (value, i, subset)
        if choice is None or choice[0] <= 0.0:
            break
        _, i, subset = choice
        t = min(m_left[i], min(n_left[u] for u in subset))
        m[i] += t
        m_left[i] -= t
        for u in subset:
            n[u] += t
            n_left[u] -= t
    return Allocation(tuple(n), tuple(m))
