"""Second-stage matching, exact evaluation of fixed allocations and the expanded two-stage LP.

Sign convention: sells store a penalty magnitude. Holding ``m_i`` sells books
``price_i - penalty_i`` per unit up front; every unit later covered by a live
buy recovers ``penalty_i``. The recourse value ``Q(n, m, S)`` is the largest
recoverable penalty total, so ``Q >= 0``.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EnumerationLimitError
from .lp_core import INT_TOL, LinearProgram, solve_or_raise
from .model import Allocation, FailureConfiguration, ProblemInstance, enumerate_configurations

EVALUATE_MAX_Q = 20
SOLVE_EXACT_MAX_Q = 14


@dataclass(frozen=True)
class MatchingResult:
    q_value: float
    flows: Mapping[tuple[int, int], float]

    @property
    def total_flow(self) -> float:
        return float(sum(self.flows.values()))


@dataclass
class SolveReport:
    """Outcome of an exact or clustered two-stage solve.

    ``per_scenario_q`` maps each configuration (exact solve) or seed index
    (clustered solve) to its recourse value at the returned allocation.
    ``allocation`` is the LP allocation rounded to integers; ``integral`` says
    whether the rounding was within tolerance, ``raw_allocation`` keeps the LP values.
    """

    objective_value: float
    allocation: Allocation
    per_scenario_q: dict
    bound_kind: str
    integral: bool = True
    raw_allocation: tuple[tuple[float, ...], tuple[float, ...]] = ((), ())
    solver_stats: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# probabilities
# --------------------------------------------------------------------------


def scenario_probability(instance: ProblemInstance, config: FailureConfiguration) -> float:
    """Probability of ``config`` under independent per-type failures."""
    _check_config(instance, config)
    prob = 1.0
    for u, buy in enumerate(instance.buys):
        prob *= (1.0 - buy.fail_prob) if config.mask >> u & 1 else buy.fail_prob
    return prob


def mask_probabilities(instance: ProblemInstance, masks: np.ndarray) -> np.ndarray:
    """Vectorized :func:`scenario_probability` over integer alive-masks."""
    masks = np.asarray(masks, dtype=np.int64)
    probs = np.ones(masks.shape, dtype=float)
    for u, buy in enumerate(instance.buys):
        alive = (masks >> u) & 1
        probs *= np.where(alive == 1, 1.0 - buy.fail_prob, buy.fail_prob)
    return probs


def _check_config(instance: ProblemInstance, config: FailureConfiguration) -> None:
    if config.size != instance.q:
        raise ValueError(f"configuration has length {config.size}, instance has q={instance.q}")


def _check_guard(instance: ProblemInstance, max_q: int, what: str) -> None:
    if instance.q > max_q:
        raise EnumerationLimitError(f"{what} enumerates 2**{instance.q} configurations; limit is q <= {max_q}")


def first_stage_value(instance: ProblemInstance, alloc: Allocation) -> float:
    """``-sum n_u R^b_u + sum m_i (R^s_i - penalty_i)``."""
    cost = sum(n * b.price for n, b in zip(alloc.n, instance.buys))
    income = sum(m * (s.price - s.penalty) for m, s in zip(alloc.m, instance.sells))
    return income - cost


# --------------------------------------------------------------------------
# second stage
# --------------------------------------------------------------------------


def _matching_lp(instance: ProblemInstance, n: Sequence[float], m: Sequence[float], mask: int):
    edges = [
        (u, i) for u, i in instance.edges
        if mask >> u & 1 and n[u] > 0 and m[i] > 0 and instance.sells[i].penalty > 0
    ]
    if not edges:
        return edges, None
    buys = sorted({u for u, _ in edges})
    sells = sorted({i for _, i in edges})
    A = np.zeros((len(sells) + len(buys), len(edges)))
    for col, (u, i) in enumerate(edges):
        A[sells.index(i), col] = 1.0
        A[len(sells) + buys.index(u), col] = 1.0
    rhs = np.array([m[i] for i in sells] + [n[u] for u in buys], dtype=float)
    lp = LinearProgram(
        objective=np.array([instance.sells[i].penalty for _, i in edges]),
        matrix=A, senses=("<=",) * A.shape[0], rhs=rhs, lower=0.0, upper=np.inf,
    )
    return edges, lp


def _matching_value(instance: ProblemInstance, n: Sequence[float], m: Sequence[float], mask: int):
    edges, lp = _matching_lp(instance, n, m, mask)
    flows = {e: 0.0 for e in instance.edges}
    if lp is None:
        return 0.0, flows
    sol = solve_or_raise(lp, "simplex", "matching LP")
    for (u, i), value in zip(edges, sol.values):
        rounded = round(value)
        flows[(u, i)] = float(rounded) if abs(value - rounded) <= INT_TOL else float(value)
    q_value = sum(flows[(u, i)] * instance.sells[i].penalty for u, i in edges)
    return float(q_value), flows


def solve_matching(
    instance: ProblemInstance, alloc: Allocation, config: FailureConfiguration
) -> MatchingResult:
    """Optimal after-failure matching of live buy units to held sell units."""
    _check_config(instance, config)
    alloc.validate_for(instance)
    return MatchingResult(*_matching_value(instance, alloc.n, alloc.m, config.mask))


class RecourseCache:
    """Memoized ``Q(n, m, S)`` for one (possibly fractional) first-stage decision.

    Only buys that are held and can reach a held sell influence ``Q``, so
    configurations are keyed by their alive bits on that support.
    """

    def __init__(self, instance: ProblemInstance, n: Sequence[float], m: Sequence[float]):
        self.instance = instance
        self.n = tuple(float(v) for v in n)
        self.m = tuple(float(v) for v in m)
        reach = 0
        for u, i in instance.edges:
            if self.n[u] > 0 and self.m[i] > 0:
                reach |= 1 << u
        self.support = reach
        self._values: dict[int, float] = {}
        self.solves = 0

    @classmethod
    def for_allocation(cls, instance: ProblemInstance, alloc: Allocation) -> "RecourseCache":
        alloc.validate_for(instance)
        return cls(instance, alloc.n, alloc.m)

    def q(self, mask: int) -> float:
        key = mask & self.support
        if key not in self._values:
            self._values[key] = _matching_value(self.instance, self.n, self.m, key)[0] if key else 0.0
            self.solves += bool(key)
        return self._values[key]


def recourse_values(
    instance: ProblemInstance, alloc: Allocation, configs: Iterable[FailureConfiguration]
) -> list[float]:
    cache = RecourseCache.for_allocation(instance, alloc)
    return [cache.q(c.mask) for c in configs]


def evaluate_exact(instance: ProblemInstance, alloc: Allocation, max_q: int = EVALUATE_MAX_Q) -> float:
    """Exact expected profit of a fixed allocation under optimal after-failure matching.

    Configurations that agree on the recourse support share one ``Q``; their
    probabilities are summed by marginalizing the other buys, which leaves the
    sum over all ``2**q`` configurations unchanged.
    """
    alloc.validate_for(instance)
    return expected_value(instance, alloc.n, alloc.m, max_q)


def expected_value(
    instance: ProblemInstance, n: Sequence[float], m: Sequence[float], max_q: int = EVALUATE_MAX_Q
) -> float:
    """:func:`evaluate_exact` for a first-stage decision that may be fractional (an LP allocation)."""
    _check_guard(instance, max_q, "evaluate_exact")
    if len(n) != instance.q or len(m) != instance.k:
        raise ValueError("decision length does not match the instance")
    cache = RecourseCache(instance, n, m)
    support = [u for u in range(instance.q) if cache.support >> u & 1]
    probs = instance.fail_probs
    expected = 0.0
    for pattern in itertools.product((0, 1), repeat=len(support)):
        mask = 0
        prob = 1.0
        for u, alive in zip(support, pattern):
            if alive:
                mask |= 1 << u
                prob *= 1.0 - probs[u]
            else:
                prob *= probs[u]
        if prob > 0.0:
            expected += prob * cache.q(mask)
    first = sum(v * b.price for v, b in zip(n, instance.buys))
    first = sum(v * (s.price - s.penalty) for v, s in zip(m, instance.sells)) - first
    return first + expected


# --------------------------------------------------------------------------
# expanded two-stage LP
# --------------------------------------------------------------------------


def build_two_stage_lp(
    instance: ProblemInstance, masks: Sequence[int], weights: Sequence[float]
) -> LinearProgram:
    """Expanded LP over the given scenarios.

    Variables are ``n`` (q), ``m`` (k), then one flow per scenario and live edge;
    flows on failed buys are fixed at zero and therefore omitted. Zero-weight
    scenarios add nothing to the objective and are skipped.
    """
    q, k = instance.q, instance.k
    price_b = np.array([b.price for b in instance.buys])
    first_m = np.array([s.price - s.penalty for s in instance.sells])
    penalty = np.array([s.penalty for s in instance.sells])

    obj = [-price_b, first_m]
    rows, cols, vals = [], [], []
    n_rows = 0
    n_vars = q + k
    for mask, weight in zip(masks, weights):
        if weight <= 0.0:
            continue
        edges = [(u, i) for u, i in instance.edges if mask >> u & 1]
        if not edges:
            continue
        sell_row = {}
        buy_row = {}
        for u, i in edges:
            if i not in sell_row:
                sell_row[i] = n_rows
                rows.append(n_rows), cols.append(q + i), vals.append(-1.0)
                n_rows += 1
            if u not in buy_row:
                buy_row[u] = n_rows
                rows.append(n_rows), cols.append(u), vals.append(-1.0)
                n_rows += 1
        for col, (u, i) in enumerate(edges, start=n_vars):
            rows.extend((sell_row[i], buy_row[u]))
            cols.extend((col, col))
            vals.extend((1.0, 1.0))
        obj.append(weight * penalty[[i for _, i in edges]])
        n_vars += len(edges)

    matrix = sp.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_vars)).tocsr()
    upper = np.full(n_vars, np.inf)
    upper[:q] = [b.capacity for b in instance.buys]
    upper[q:q + k] = [s.capacity for s in instance.sells]
    return LinearProgram(
        objective=np.concatenate(obj), matrix=matrix, senses=("<=",) * n_rows,
        rhs=np.zeros(n_rows), lower=0.0, upper=upper,
    )


def solve_two_stage(
    instance: ProblemInstance,
    masks: Sequence[int],
    weights: Sequence[float],
    method: str = "auto",
) -> tuple[float, Allocation, bool, tuple, dict]:
    """Solve the expanded LP; returns ``(value, allocation, integral, raw_allocation, stats)``."""
    start = time.perf_counter()
    lp = build_two_stage_lp(instance, masks, weights)
    sol = solve_or_raise(lp, method, "two-stage LP")
    q, k = instance.q, instance.k
    raw_n = tuple(float(v) for v in sol.values[:q])
    raw_m = tuple(float(v) for v in sol.values[q:q + k])
    raw = np.array(raw_n + raw_m)
    integral = bool(np.all(np.abs(raw - np.round(raw)) <= INT_TOL))
    alloc = Allocation(tuple(int(round(v)) for v in raw_n), tuple(int(round(v)) for v in raw_m))
    stats = {
        "backend": sol.backend,
        "iterations": sol.iterations,
        "lp_vars": lp.num_vars,
        "lp_rows": lp.num_rows,
        "scenarios": int(sum(1 for w in weights if w > 0)),
        "lp_seconds": sol.wall_time,
        "wall_time": time.perf_counter() - start,
    }
    return float(sol.objective_value), alloc, integral, (raw_n, raw_m), stats


def solve_exact(instance: ProblemInstance, max_q: int = SOLVE_EXACT_MAX_Q, method: str = "auto") -> SolveReport:
    """Optimal portfolio over all ``2**q`` failure configurations."""
    _check_guard(instance, max_q, "solve_exact")
    start = time.perf_counter()
    configs = list(enumerate_configurations(instance.q))
    masks = np.array([c.mask for c in configs], dtype=np.int64)
    weights = mask_probabilities(instance, masks)
    value, alloc, integral, raw, stats = solve_two_stage(instance, masks.tolist(), weights.tolist(), method)
    cache = RecourseCache.for_allocation(instance, alloc)
    per_q = {c: cache.q(c.mask) for c in configs}
    stats["matching_solves"] = cache.solves
    stats["wall_time"] = time.perf_counter() - start
    return SolveReport(value, alloc, per_q, "exact", integral, raw, stats)
