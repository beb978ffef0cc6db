"""Cluster-based lower and upper bounds on the two-stage optimum.

A seed order ``W = (S_1, ..., S_r)`` starts with the all-alive configuration,
ends with the all-fail configuration, and never lists a seed before one it
failure-dominates. Every configuration is represented by one seed:

* lower clustering: the first seed (forward scan) that failure-dominates it,
  i.e. a seed with at least its failures, so each replacement can only lose value;
* upper clustering: the first seed scanning backwards that non-failure-dominates
  it, i.e. a seed with at most its failures.

Solving the expanded LP on the seeds with cluster masses as scenario weights
then bounds the optimum from below or above.

Configurations are handled as integer alive-masks internally (bit ``u`` set
means buy ``u`` alive); :class:`~contractmatch.model.FailureConfiguration`
wraps a mask with its length.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractMatchError, SolverError, ValidationError
from .model import Allocation, FailureConfiguration, ProblemInstance
from .recourse import (
    EVALUATE_MAX_Q,
    RecourseCache,
    SolveReport,
    _check_guard,
    first_stage_value,
    mask_probabilities,
    scenario_probability,
    solve_two_stage,
)

LOWER = "lower"
UPPER = "upper"

EXACT = "exact"
IE_LOWER = "ie_lower_corrected"
IE_UPPER = "ie_upper_corrected"
MONTE_CARLO = "monte_carlo"

H_TOL = 1e-12
DEFAULT_IE_DEPTH = 2
DEFAULT_REORDER_ITERS = 20
SAMPLING_ATTEMPTS = 1000
# enumerate a cluster's members when rejection sampling fails and the seed has at most this many failures
ENUM_FALLBACK_FAILURES = 20


class InvalidSeedOrder(ContractMatchError, ValueError):
    """A candidate seed order breaks the ordering rules; ``violations`` lists every problem found."""

    def __init__(self, violations: list[dict]):
        self.violations = violations
        super().__init__("; ".join(v["message"] for v in violations))


class NoSplittableCluster(ContractMatchError):
    """Every cluster is fully explained by its seed; refinement cannot continue."""


class DistributionMismatch(ContractMatchError, ValueError):
    """A cluster distribution does not belong to the seed order or bound it is used with."""


def _check_bound(bound: str) -> str:
    if bound not in (LOWER, UPPER):
        raise ValueError(f"bound must be 'lower' or 'upper', got {bound!r}")
    return bound


# --------------------------------------------------------------------------
# dominance
# --------------------------------------------------------------------------


def _same_length(a: FailureConfiguration, b: FailureConfiguration) -> None:
    if a.size != b.size:
        raise ValidationError(f"configuration lengths differ ({a.size} vs {b.size})", "config")


def failure_dominates(s1: FailureConfiguration, s2: FailureConfiguration) -> bool:
    """True when every buy failed in ``s2`` has also failed in ``s1``."""
    _same_length(s1, s2)
    return s1.mask & ~s2.mask == 0


def non_failure_dominates(s1: FailureConfiguration, s2: FailureConfiguration) -> bool:
    """True when every buy alive in ``s2`` is also alive in ``s1``."""
    return failure_dominates(s2, s1)


def failure_overlap(s1: FailureConfiguration, s2: FailureConfiguration) -> FailureConfiguration:
    """Configuration whose failures are exactly the failures common to both inputs."""
    _same_length(s1, s2)
    return FailureConfiguration(s1.mask | s2.mask, s1.size)


def _alive_product(probs: np.ndarray, mask: int) -> float:
    out = 1.0
    for u, p in enumerate(probs):
        if mask >> u & 1:
            out *= 1.0 - p
    return out


def _failed_product(probs: np.ndarray, mask: int) -> float:
    out = 1.0
    for u, p in enumerate(probs):
        if not mask >> u & 1:
            out *= p
    return out


def fds_probability(instance: ProblemInstance, config: FailureConfiguration) -> float:
    """Mass of all configurations failure-dominated by ``config``: the chance its alive buys all survive."""
    return _alive_product(instance.fail_probs, config.mask)


def nfds_probability(instance: ProblemInstance, config: FailureConfiguration) -> float:
    """Mass of all configurations non-failure-dominated by ``config``: the chance its failed buys all fail."""
    return _failed_product(instance.fail_probs, config.mask)


# --------------------------------------------------------------------------
# seed orders
# --------------------------------------------------------------------------


def _order_violations(seeds: Sequence[FailureConfiguration]) -> list[dict]:
    if not seeds:
        return [{"kind": "empty", "message": "seed order is empty"}]
    q = seeds[0].size
    bad_len = [idx for idx, s in enumerate(seeds) if s.size != q]
    if bad_len:
        return [{"kind": "length", "positions": bad_len,
                 "message": f"seeds at positions {bad_len} do not have length {q}"}]
    out = []
    if seeds[0].mask != (1 << q) - 1:
        out.append({"kind": "missing_all_alive", "message": "first seed must be the all-alive configuration"})
    if seeds[-1].mask != 0:
        out.append({"kind": "missing_all_fail", "message": "last seed must be the all-fail configuration"})
    masks = np.array([s.mask for s in seeds], dtype=np.int64)
    first_pos: dict[int, int] = {}
    for idx, mask in enumerate(masks.tolist()):
        if mask in first_pos:
            out.append({"kind": "duplicate", "positions": (first_pos[mask], idx),
                        "message": f"seed {seeds[idx]} repeated at positions {first_pos[mask]} and {idx}"})
        else:
            first_pos[mask] = idx
    # dom[i, j]: seed i failure-dominates seed j
    dom = (masks[:, None] & ~masks[None, :]) == 0
    dom &= masks[:, None] != masks[None, :]
    earlier, later = np.nonzero(np.triu(dom, k=1))
    for i, j in zip(earlier.tolist(), later.tolist()):
        out.append({
            "kind": "dominance", "earlier": i, "later": j,
            "message": f"seed {seeds[i]} (position {i}) failure-dominates later seed {seeds[j]} (position {j})",
        })
    return out


@dataclass(frozen=True)
class SeedOrder:
    seeds: tuple[FailureConfiguration, ...]

    def __post_init__(self):
        seeds = tuple(self.seeds)
        object.__setattr__(self, "seeds", seeds)
        violations = _order_violations(seeds)
        if violations:
            raise InvalidSeedOrder(violations)

    @classmethod
    def initial(cls, q: int) -> "SeedOrder":
        return cls((FailureConfiguration.all_alive(q), FailureConfiguration.all_failed(q)))

    @property
    def q(self) -> int:
        return self.seeds[0].size

    @property
    def masks(self) -> np.ndarray:
        return np.array([s.mask for s in self.seeds], dtype=np.int64)

    def inserted(self, config: FailureConfiguration, position: int) -> "SeedOrder":
        return SeedOrder(self.seeds[:position] + (config,) + self.seeds[position:])

    def __len__(self) -> int:
        return len(self.seeds)

    def __iter__(self):
        return iter(self.seeds)

    def __getitem__(self, idx):
        return self.seeds[idx]

    def __str__(self) -> str:
        return " ".join(s.bits for s in self.seeds)


def validate_seed_order(candidates: Iterable[FailureConfiguration | str]) -> SeedOrder:
    """Build a :class:`SeedOrder`, raising :class:`InvalidSeedOrder` with a violation report."""
    seeds = tuple(FailureConfiguration.from_bits(c) if isinstance(c, str) else c for c in candidates)
    return SeedOrder(seeds)


def assign_cluster(order: SeedOrder, config: FailureConfiguration, bound: str = LOWER) -> int:
    """Index of the seed that represents ``config`` in the lower or upper clustering."""
    _check_bound(bound)
    _same_length(order.seeds[0], config)
    if bound == LOWER:
        for idx, seed in enumerate(order.seeds):
            if seed.mask & ~config.mask == 0:
                return idx
    else:
        for idx in range(len(order.seeds) - 1, -1, -1):
            if config.mask & ~order.seeds[idx].mask == 0:
                return idx
    raise AssertionError("seed order without all-alive/all-fail endpoints")


def assign_masks(order: SeedOrder, masks: np.ndarray, bound: str = LOWER) -> np.ndarray:
    """Vectorized :func:`assign_cluster` over an array of alive-masks."""
    _check_bound(bound)
    masks = np.asarray(masks, dtype=np.int64)
    out = np.full(masks.shape, -1, dtype=np.int64)
    seeds = order.masks
    indices = range(len(seeds)) if bound == LOWER else range(len(seeds) - 1, -1, -1)
    for idx in indices:
        s = seeds[idx]
        hit = (out < 0) & ((masks & s) == s if bound == LOWER else (masks & s) == masks)
        out[hit] = idx
    return out


# --------------------------------------------------------------------------
# cluster probabilities
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterDistribution:
    weights: tuple[float, ...]
    kind: str
    bound: str = LOWER
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if any(x < -1e-12 for x in w):
            raise ValidationError(f"negative cluster weight in {w}", "weights")
        if abs(math.fsum(w) - 1.0) > 1e-9:
            raise ValidationError(f"cluster weights sum to {math.fsum(w)!r}, not 1", "weights")
        if self.kind not in (EXACT, IE_LOWER, IE_UPPER, MONTE_CARLO):
            raise ValidationError(f"unknown distribution kind {self.kind!r}", "kind")
        _check_bound(self.bound)

    @property
    def guaranteed(self) -> bool:
        """Whether solving with these weights yields a certified bound (Monte Carlo does not)."""
        return self.kind != MONTE_CARLO


def _all_masks(q: int) -> np.ndarray:
    return np.arange(1 << q, dtype=np.int64)


def cluster_probs_exact(
    instance: ProblemInstance, order: SeedOrder, bound: str = LOWER, max_q: int = EVALUATE_MAX_Q
) -> ClusterDistribution:
    """Cluster masses by enumerating every configuration."""
    _check_bound(bound)
    _check_guard(instance, max_q, "cluster_probs_exact")
    masks = _all_masks(instance.q)
    probs = mask_probabilities(instance, masks)
    idx = assign_masks(order, masks, bound)
    weights = np.bincount(idx, weights=probs, minlength=len(order))
    return ClusterDistribution(tuple(weights.tolist()), EXACT, bound, {"configurations": int(masks.size)})


def _ie_estimate(target: int, others: Sequence[int], depth: int, combine, marginal) -> float:
    """Inclusion-exclusion mass of ``A_target minus the union of A_other``.

    ``combine`` maps two masks to the mask of their event intersection and
    ``marginal`` gives an event's mass. Terms with ``|T|`` overlapped seeds carry
    sign ``(-1)**|T|``; only ``|T| < depth`` is kept. Terms are grouped by the
    resulting mask, so a full expansion costs at most ``2**q`` states per seed.
    """
    full = depth > len(others)
    if full:
        coef = {target: 1}
        for other in others:
            step = dict(coef)
            for mask, a in coef.items():
                key = combine(mask, other)
                step[key] = step.get(key, 0) - a
            coef = {m: a for m, a in step.items() if a}
        return math.fsum(a * marginal(m) for m, a in coef.items())

    top = depth - 1
    if top % 2 == 0:
        # stop after a subtraction so the truncated sum stays a lower estimate
        top -= 1
    if top < 0:
        return 0.0
    levels: list[dict[int, int]] = [{target: 1}] + [{} for _ in range(top)]
    for other in others:
        for level in range(top, 0, -1):
            below = levels[level - 1]
            here = levels[level]
            for mask, count in below.items():
                key = combine(mask, other)
                here[key] = here.get(key, 0) + count
    return math.fsum(
        (-1) ** level * count * marginal(mask)
        for level, terms in enumerate(levels) for mask, count in terms.items()
    )


def cluster_probs_ie(
    instance: ProblemInstance, order: SeedOrder, depth: int = DEFAULT_IE_DEPTH, bound: str = LOWER
) -> ClusterDistribution:
    """Cluster masses from a truncated inclusion-exclusion expansion, corrected to keep the bound valid.

    Lower bound: each non-final seed gets ``max(p(seed), estimate)`` where the
    estimate is truncated after a subtraction, and whatever mass is left over
    goes to the all-fail seed. Upper bound mirrors this with non-failure
    dominance and hands the leftover mass to the all-alive seed.
    """
    _check_bound(bound)
    if depth < 1:
        raise ValidationError("inclusion-exclusion depth must be >= 1", "depth")
    probs = instance.fail_probs
    masks = order.masks.tolist()
    r = len(masks)
    seed_probs = mask_probabilities(instance, order.masks)
    weights = [0.0] * r
    if bound == LOWER:
        memo: dict[int, float] = {}

        def marginal(m: int) -> float:
            if m not in memo:
                memo[m] = _alive_product(probs, m)
            return memo[m]

        for j in range(r - 1):
            est = _ie_estimate(masks[j], masks[:j], depth, lambda a, b: a | b, marginal)
            weights[j] = max(float(seed_probs[j]), est)
        weights[r - 1] = max(0.0, 1.0 - math.fsum(weights[: r - 1]))
        kind = IE_LOWER
    else:
        memo = {}

        def marginal(m: int) -> float:
            if m not in memo:
                memo[m] = _failed_product(probs, m)
            return memo[m]

        for j in range(1, r):
            est = _ie_estimate(masks[j], masks[j + 1:], depth, lambda a, b: a & b, marginal)
            weights[j] = max(float(seed_probs[j]), est)
        weights[0] = max(0.0, 1.0 - math.fsum(weights[1:]))
        kind = IE_UPPER
    total = math.fsum(weights)
    if abs(total - 1.0) > 1e-12:
        # only reachable through rounding in the residual
        weights = [w / total for w in weights]
    return ClusterDistribution(tuple(weights), kind, bound, {"depth": depth})


MC_BATCH = 1 << 15


def cluster_probs_mc(
    instance: ProblemInstance,
    order: SeedOrder,
    samples: int = 100_000,
    bound: str = LOWER,
    rng_seed: int | Sequence[int] = 0,
) -> ClusterDistribution:
    """Empirical cluster frequencies from sampled failure configurations.

    Samples are drawn in fixed-size batches, each from its own spawned
    substream, so the result depends only on ``rng_seed`` and ``samples``.
    """
    _check_bound(bound)
    if samples < 1:
        raise ValidationError("need at least one sample", "samples")
    alive_p = 1.0 - instance.fail_probs
    weights_bits = np.int64(1) << np.arange(instance.q, dtype=np.int64)
    counts = np.zeros(len(order), dtype=np.int64)
    n_batches = -(-samples // MC_BATCH)
    children = np.random.SeedSequence(rng_seed).spawn(n_batches)
    for b, child in enumerate(children):
        size = min(MC_BATCH, samples - b * MC_BATCH)
        rng = np.random.default_rng(child)
        alive = rng.random((size, instance.q)) < alive_p
        masks = alive.astype(np.int64) @ weights_bits
        counts += np.bincount(assign_masks(order, masks, bound), minlength=len(order))
    weights = counts / samples
    return ClusterDistribution(tuple(weights.tolist()), MONTE_CARLO, bound, {"samples": samples})


@dataclass(frozen=True)
class ProbabilityModel:
    """How cluster masses are obtained: ``exact``, ``ie`` or ``mc``."""

    mode: str = "exact"
    ie_depth: int = DEFAULT_IE_DEPTH
    mc_samples: int = 100_000
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("exact", "ie", "mc"):
            raise ValidationError(f"unknown probability mode {self.mode!r}", "prob_mode")

    def distribution(
        self, instance: ProblemInstance, order: SeedOrder, bound: str = LOWER, stream: Sequence[int] = ()
    ) -> ClusterDistribution:
        if self.mode == "exact":
            return cluster_probs_exact(instance, order, bound)
        if self.mode == "ie":
            return cluster_probs_ie(instance, order, self.ie_depth, bound)
        return cluster_probs_mc(instance, order, self.mc_samples, bound, [self.rng_seed, *stream])


# --------------------------------------------------------------------------
# clustered solving
# --------------------------------------------------------------------------


def _check_dist(order: SeedOrder, dist: ClusterDistribution, bound: str) -> None:
    if len(dist.weights) != len(order):
        raise DistributionMismatch(f"{len(dist.weights)} weights for {len(order)} seeds")
    if dist.bound != bound:
        raise DistributionMismatch(f"distribution computed for the {dist.bound} clustering, used for {bound}")
    if (dist.kind == IE_LOWER and bound != LOWER) or (dist.kind == IE_UPPER and bound != UPPER):
        raise DistributionMismatch(f"{dist.kind} weights cannot back a {bound} bound")


def seed_q_values(instance: ProblemInstance, alloc: Allocation, order: SeedOrder) -> list[float]:
    """Recourse value of ``alloc`` at every seed."""
    cache = RecourseCache.for_allocation(instance, alloc)
    return [cache.q(s.mask) for s in order.seeds]


def evaluate_clustered(
    instance: ProblemInstance, alloc: Allocation, order: SeedOrder, dist: ClusterDistribution
) -> float:
    """Expected profit of a fixed allocation when each cluster is replaced by its seed."""
    _check_dist(order, dist, dist.bound)
    qs = seed_q_values(instance, alloc, order)
    return first_stage_value(instance, alloc) + math.fsum(w * qv for w, qv in zip(dist.weights, qs))


def solve_clustered(
    instance: ProblemInstance,
    order: SeedOrder,
    dist: ClusterDistribution,
    bound: str = LOWER,
    method: str = "auto",
) -> SolveReport:
    """Expanded two-stage LP restricted to the seeds, weighted by cluster mass."""
    _check_bound(bound)
    _check_dist(order, dist, bound)
    start = time.perf_counter()
    value, alloc, integral, raw, stats = solve_two_stage(
        instance, order.masks.tolist(), list(dist.weights), method
    )
    cache = RecourseCache(instance, *raw)
    per_q = {idx: cache.q(s.mask) for idx, s in enumerate(order.seeds)}
    stats.update(distribution=dist.kind, guaranteed=dist.guaranteed, clusters=len(order),
                 wall_time=time.perf_counter() - start)
    return SolveReport(value, alloc, per_q, bound, integral, raw, stats)


def _q_sort_key(q_value: float, seed: FailureConfiguration):
    # rounding absorbs LP noise so Q-monotonicity under dominance survives the comparison
    return (-round(q_value, 9), seed.failed_count, seed.bits)


def reorder_seeds(
    instance: ProblemInstance,
    order: SeedOrder,
    probability: ProbabilityModel | None = None,
    max_iters: int = DEFAULT_REORDER_ITERS,
    bound: str = LOWER,
    method: str = "auto",
    stream: Sequence[int] = (),
) -> tuple[SeedOrder, SolveReport]:
    """Sort seeds by decreasing recourse value at the current optimum and re-solve until stable.

    Sorting puts, among all seeds that could represent a configuration, the one
    with the largest ``Q`` first, so with exact masses the lower bound never
    drops (the upper bound never rises). Equal ``Q`` values are ordered by
    fewer failures first, then by bit string; since a dominating seed never has
    a larger ``Q`` than the seed it dominates, the sorted order stays valid.
    ``solver_stats["reorder_values"]`` records the value after every solve.
    """
    probability = probability or ProbabilityModel()
    dist = probability.distribution(instance, order, bound, stream)
    report = solve_clustered(instance, order, dist, bound, method)
    values = [report.objective_value]
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        cache = RecourseCache(instance, *report.raw_allocation)
        qs = [cache.q(s.mask) for s in order.seeds]
        ranked = sorted(range(len(order)), key=lambda idx: _q_sort_key(qs[idx], order.seeds[idx]))
        seeds = tuple(order.seeds[idx] for idx in ranked)
        if seeds == order.seeds:
            break
        try:
            order = SeedOrder(seeds)
        except InvalidSeedOrder as exc:
            raise SolverError(f"Q-sorted seed order is invalid: {exc}") from exc
        dist = probability.distribution(instance, order, bound, stream)
        report = solve_clustered(instance, order, dist, bound, method)
        values.append(report.objective_value)
    report.solver_stats.update(reorder_values=values, reorder_iterations=iterations)
    return order, report


# --------------------------------------------------------------------------
# seed selection and refinement
# --------------------------------------------------------------------------


def _in_cluster(masks: np.ndarray, j: int, seeds: np.ndarray) -> np.ndarray:
    """Which ``masks`` (all failure-dominated by seed ``j``) land in cluster ``j`` of the lower clustering."""
    ok = masks != seeds[j]
    for i in range(j):
        ok &= (masks & seeds[i]) != seeds[i]
    return ok


def _split_cluster(instance: ProblemInstance, order: SeedOrder, j: int, rng: np.random.Generator):
    q = instance.q
    seeds = order.masks
    seed = int(seeds[j])
    free = [u for u in range(q) if not seed >> u & 1]
    alive_p = 1.0 - instance.fail_probs[free]
    bits = np.int64(1) << np.array(free, dtype=np.int64)
    # failed coordinates of the seed revive independently; its alive ones stay alive
    draws = rng.random((SAMPLING_ATTEMPTS, len(free))) < alive_p
    masks = seed | (draws.astype(np.int64) @ bits)
    ok = np.flatnonzero(_in_cluster(masks, j, seeds))
    if ok.size:
        return int(masks[ok[0]])
    if len(free) > ENUM_FALLBACK_FAILURES:
        return None
    members = seed | (_subset_masks(len(free)) @ bits if free else np.zeros(1, dtype=np.int64))
    members = members[_in_cluster(members, j, seeds)]
    if members.size == 0:
        return None
    probs = mask_probabilities(instance, members)
    configs = [FailureConfiguration(int(m), q) for m in members]
    best = max(range(len(configs)), key=lambda idx: (probs[idx], [-ord(c) for c in configs[idx].bits]))
    return int(members[best])


def _subset_masks(width: int) -> np.ndarray:
    codes = np.arange(1 << width, dtype=np.int64)
    return ((codes[:, None] >> np.arange(width)) & 1).astype(np.int64)


def cluster_potentials(instance: ProblemInstance, order: SeedOrder, dist: ClusterDistribution) -> list[float]:
    """``H = cluster mass - seed's own probability`` for every seed."""
    seed_probs = mask_probabilities(instance, order.masks)
    return [w - float(p) for w, p in zip(dist.weights, seed_probs)]


def select_seed(
    instance: ProblemInstance,
    order: SeedOrder,
    dist: ClusterDistribution,
    rng_seed: int | Sequence[int] = 0,
) -> tuple[FailureConfiguration, int]:
    """Split the cluster with the most mass not explained by its seed.

    Returns the new seed and the position to insert it at (just before the
    split cluster's seed). A new seed ``X`` from cluster ``j`` keeps the order
    valid there: no earlier seed failure-dominates ``X`` (it would have claimed
    ``X`` first), and if ``X`` failure-dominated some later seed then so would
    seed ``j``, which the existing order already rules out.
    """
    _check_dist(order, dist, LOWER)
    rng = np.random.default_rng(rng_seed)
    h = cluster_potentials(instance, order, dist)
    ranked = sorted((idx for idx in range(len(order)) if h[idx] > H_TOL), key=lambda idx: (-h[idx], idx))
    for j in ranked:
        mask = _split_cluster(instance, order, j, rng)
        if mask is not None:
            return FailureConfiguration(mask, instance.q), j
    raise NoSplittableCluster("no cluster holds probability mass beyond its seed")


def select_random_seed(
    instance: ProblemInstance, order: SeedOrder, rng_seed: int | Sequence[int] = 0
) -> tuple[FailureConfiguration, int]:
    """Uniformly random non-seed configuration, inserted before the seed of its lower cluster."""
    q = instance.q
    total = 1 << q
    if len(order) >= total:
        raise NoSplittableCluster("every configuration is already a seed")
    rng = np.random.default_rng(rng_seed)
    taken = set(order.masks.tolist())
    if q <= 16:
        free = np.setdiff1d(np.arange(total, dtype=np.int64), np.fromiter(taken, dtype=np.int64))
        mask = int(free[rng.integers(free.size)])
    else:
        while True:
            mask = int(rng.integers(total))
            if mask not in taken:
                break
    config = FailureConfiguration(mask, q)
    return config, assign_cluster(order, config, LOWER)


@dataclass(frozen=True)
class RefineOptions:
    max_clusters: int = 30
    prob_mode: str = "exact"
    ie_depth: int = DEFAULT_IE_DEPTH
    mc_samples: int = 100_000
    seed_select: str = "heuristic"
    reorder: bool = True
    upper: bool = False
    rng_seed: int = 0
    max_reorder_iters: int = DEFAULT_REORDER_ITERS
    lp_method: str = "auto"

    def __post_init__(self):
        if self.max_clusters < 2:
            raise ValidationError("max_clusters must be >= 2", "max_clusters")
        if self.seed_select not in ("heuristic", "random"):
            raise ValidationError(f"unknown seed selection {self.seed_select!r}", "seed_select")
        ProbabilityModel(self.prob_mode)

    @property
    def probability(self) -> ProbabilityModel:
        return ProbabilityModel(self.prob_mode, self.ie_depth, self.mc_samples, self.rng_seed)


@dataclass(frozen=True)
class RefinementStep:
    clusters: int
    lower_value: float
    upper_value: float | None
    allocation: Allocation
    seeds: SeedOrder
    wall_time: float
    integral: bool = True
    upper_allocation: Allocation | None = None
    raw_allocation: tuple = ((), ())


@dataclass
class RefinementTrace:
    steps: list[RefinementStep] = field(default_factory=list)
    stop_reason: str = ""

    def append(self, step: RefinementStep) -> None:
        if self.steps and step.clusters <= self.steps[-1].clusters:
            raise ValueError("cluster count must increase along a refinement trace")
        self.steps.append(step)

    @property
    def final(self) -> RefinementStep:
        return self.steps[-1]

    @property
    def lower_values(self) -> list[float]:
        return [s.lower_value for s in self.steps]


def refine(instance: ProblemInstance, options: RefineOptions | None = None) -> RefinementTrace:
    """Grow the seed set from (all-alive, all-fail) one seed at a time, bounding the optimum at every size."""
    opts = options or RefineOptions()
    prob = opts.probability
    order = SeedOrder.initial(instance.q)
    trace = RefinementTrace()
    step = 0
    while True:
        start = time.perf_counter()
        stream = (step,)
        if opts.reorder:
            order, lower = reorder_seeds(
                instance, order, prob, opts.max_reorder_iters, LOWER, opts.lp_method, stream
            )
        else:
            lower = solve_clustered(instance, order, prob.distribution(instance, order, LOWER, stream),
                                    LOWER, opts.lp_method)
        upper = None
        if opts.upper:
            upper = solve_clustered(instance, order, prob.distribution(instance, order, UPPER, stream),
                                    UPPER, opts.lp_method)
        trace.append(RefinementStep(
            clusters=len(order),
            lower_value=lower.objective_value,
            upper_value=None if upper is None else upper.objective_value,
            allocation=lower.allocation,
            seeds=order,
            wall_time=time.perf_counter() - start,
            integral=lower.integral,
            upper_allocation=None if upper is None else upper.allocation,
            raw_allocation=lower.raw_allocation,
        ))
        if len(order) >= opts.max_clusters:
            trace.stop_reason = "max_clusters"
            break
        try:
            if opts.seed_select == "heuristic":
                dist = prob.distribution(instance, order, LOWER, stream)
                config, position = select_seed(instance, order, dist, [opts.rng_seed, step, 1])
            else:
                config, position = select_random_seed(instance, order, [opts.rng_seed, step, 1])
        except NoSplittableCluster:
            trace.stop_reason = "no_splittable_cluster"
            break
        order = order.inserted(config, position)
        step += 1
    return trace


__all__ = [
    "ClusterDistribution", "DistributionMismatch", "InvalidSeedOrder", "NoSplittableCluster",
    "ProbabilityModel", "RefineOptions", "RefinementStep", "RefinementTrace", "SeedOrder",
    "assign_cluster", "assign_masks", "cluster_potentials", "cluster_probs_exact", "cluster_probs_ie",
    "cluster_probs_mc", "evaluate_clustered", "failure_dominates", "failure_overlap", "fds_probability",
    "nfds_probability", "non_failure_dominates", "refine", "reorder_seeds", "scenario_probability",
    "seed_q_values", "select_random_seed", "select_seed", "solve_clustered", "validate_seed_order",
]
