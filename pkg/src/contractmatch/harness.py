"""Experiment runner: refinement curves for several clustering variants against reference solutions."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .clustering import RefineOptions, refine
from .errors import ContractMatchError, ValidationError
from .greedy import greedy_diversified, greedy_pairwise
from .model import PriceRanges, ProblemInstance, generate_instance, load_instance
from .recourse import EVALUATE_MAX_Q, SOLVE_EXACT_MAX_Q, evaluate_exact, solve_exact

log = logging.getLogger(__name__)

REFERENCE_METHODS = ("exact", "pairwise", "diversified")
CLUSTER_VARIANTS = ("heuristic+reorder", "heuristic", "random+reorder", "random")
CSV_COLUMNS = ("trial", "variant", "clusters", "value", "bound_kind", "millis")


def parse_variant(name: str) -> tuple[str, bool]:
    """``"heuristic+reorder"`` -> ``("heuristic", True)``."""
    select, _, extra = name.partition("+")
    if select not in ("heuristic", "random") or extra not in ("", "reorder"):
        raise ValidationError(f"unknown clustering variant {name!r}", "methods")
    return select, extra == "reorder"


def trial_seed(rng_seed: int, trial: int) -> int:
    """Seed for one trial: the base seed xor a 32-bit hash of the trial index."""
    digest = hashlib.blake2b(str(trial).encode(), digest_size=4).digest()
    return (rng_seed ^ int.from_bytes(digest, "little")) & 0xFFFFFFFF


@dataclass(frozen=True)
class GeneratorParams:
    q: int = 6
    k: int = 4
    density: float = 0.5
    seed: int = 0
    ranges: PriceRanges = field(default_factory=PriceRanges)


@dataclass(frozen=True)
class ExperimentConfig:
    instance_path: str | None = None
    generator: GeneratorParams | None = None
    methods: tuple[str, ...] = REFERENCE_METHODS + ("heuristic+reorder", "random")
    trials: int = 10
    max_clusters: int = 30
    rng_seed: int = 0
    prob_mode: str = "exact"
    ie_depth: int = 2
    mc_samples: int = 100_000
    per_trial_instance: bool = False
    output: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("trials must be >= 1", "trials")
        if self.max_clusters < 2:
            raise ValidationError("max_clusters must be >= 2", "max_clusters")
        if (self.instance_path is None) == (self.generator is None):
            raise ValidationError("give exactly one of 'instance' and 'generator'", "instance")
        if self.per_trial_instance and self.generator is None:
            raise ValidationError("per_trial_instance needs generator parameters", "per_trial_instance")
        methods = []
        for m in self.methods:
            methods.extend(REFERENCE_METHODS + CLUSTER_VARIANTS if m == "all" else (m,))
        for m in methods:
            if m not in REFERENCE_METHODS:
                parse_variant(m)
        object.__setattr__(self, "methods", tuple(dict.fromkeys(methods)))

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ValidationError("experiment config must be a JSON object", "")
        doc = dict(doc)
        gen = doc.pop("generator", None)
        if gen is not None:
            gen = dict(gen)
            ranges = gen.pop("ranges", None) or {}
            try:
                gen = GeneratorParams(**gen, ranges=PriceRanges(**{k: tuple(v) for k, v in ranges.items()}))
            except TypeError as exc:
                raise ValidationError(str(exc), "generator")
        if "instance" in doc:
            doc["instance_path"] = doc.pop("instance")
        if "methods" in doc:
            doc["methods"] = tuple(doc["methods"])
        try:
            return cls(generator=gen, **doc)
        except TypeError as exc:
            raise ValidationError(str(exc), "config")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"malformed JSON: {exc}", str(path))
        return cls.from_dict(doc)


@dataclass(frozen=True)
class ExperimentRow:
    trial: int
    variant: str
    clusters: int
    value: float
    bound_kind: str
    millis: float

    def as_csv(self) -> list[str]:
        return [str(self.trial), self.variant, str(self.clusters), f"{self.value:.9f}",
                self.bound_kind, f"{self.millis:.3f}"]


@dataclass
class ExperimentReport:
    rows: list[ExperimentRow] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    def summary(self) -> list[dict]:
        """Mean value over trials per (variant, cluster count)."""
        groups: dict[tuple[str, int], list[float]] = defaultdict(list)
        for row in self.rows:
            groups[(row.variant, row.clusters)].append(row.value)
        return [
            {"variant": v, "clusters": c, "mean_value": sum(vals) / len(vals), "trials": len(vals)}
            for (v, c), vals in sorted(groups.items())
        ]

    def to_csv(self, include_time: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = CSV_COLUMNS if include_time else CSV_COLUMNS[:-1]
        writer.writerow(cols)
        for row in self.rows:
            writer.writerow(row.as_csv()[: len(cols)])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("variant", "clusters", "mean_value", "trials"))
        for s in self.summary():
            writer.writerow((s["variant"], s["clusters"], f"{s['mean_value']:.9f}", s["trials"]))
        return buf.getvalue()

    def write(self, path) -> None:
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8")
        path.with_name(path.stem + ".summary.csv").write_text(self.summary_csv(), encoding="utf-8")
        if self.failures:
            path.with_name(path.stem + ".failures.json").write_text(json.dumps(self.failures, indent=2))


def _instance_for(config: ExperimentConfig, trial: int) -> ProblemInstance:
    if config.instance_path is not None:
        return load_instance(config.instance_path)
    g = config.generator
    seed = trial_seed(g.seed, trial) if config.per_trial_instance else g.seed
    return generate_instance(g.q, g.k, g.density, g.ranges, seed)


def _trial_rows(config: ExperimentConfig, instance: ProblemInstance, trial: int) -> list[ExperimentRow]:
    rows = []
    seed = trial_seed(config.rng_seed, trial)
    for method in config.methods:
        start = time.perf_counter()
        if method == "exact":
            if instance.q > SOLVE_EXACT_MAX_Q:
                log.warning("skipping exact reference: q=%d exceeds %d", instance.q, SOLVE_EXACT_MAX_Q)
                continue
            value = solve_exact(instance).objective_value
        elif method in ("pairwise", "diversified"):
            if instance.q > EVALUATE_MAX_Q:
                log.warning("skipping %s reference: q=%d exceeds %d", method, instance.q, EVALUATE_MAX_Q)
                continue
            alloc = greedy_pairwise(instance) if method == "pairwise" else greedy_diversified(instance)
            value = evaluate_exact(instance, alloc)
        else:
            select, reorder = parse_variant(method)
            trace = refine(instance, RefineOptions(
                max_clusters=config.max_clusters, prob_mode=config.prob_mode, ie_depth=config.ie_depth,
                mc_samples=config.mc_samples, seed_select=select, reorder=reorder, rng_seed=seed,
            ))
            rows.extend(
                ExperimentRow(trial, method, s.clusters, s.lower_value, "lower", s.wall_time * 1000.0)
                for s in trace.steps
            )
            continue
        rows.append(ExperimentRow(trial, method, -1, value, "exact", (time.perf_counter() - start) * 1000.0))
    return rows


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run every trial; a failing trial is logged in ``failures`` and the rest still run."""
    report = ExperimentReport()
    for trial in range(config.trials):
        try:
            instance = _instance_for(config, trial)
            report.rows.extend(_trial_rows(config, instance, trial))
        except ContractMatchError as exc:
            log.error("trial %d failed: %s", trial, exc)
            report.failures.append({"trial": trial, "error": type(exc).__name__, "message": str(exc)})
    report.rows.sort(key=lambda r: (r.trial, r.variant, r.clusters))
    return report


def config_to_dict(config: ExperimentConfig) -> dict:
    doc = asdict(config)
    doc["methods"] = list(config.methods)
    return doc


__all__: Sequence[str] = (
    "ExperimentConfig", "ExperimentReport", "ExperimentRow", "GeneratorParams",
    "parse_variant", "run_experiment", "trial_seed",
)
