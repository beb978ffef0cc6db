"""Command-line entry point: ``contractmatch {generate,solve,evaluate,experiment}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .clustering import (
    LOWER, UPPER, DistributionMismatch, InvalidSeedOrder, ProbabilityModel, RefineOptions,
    SeedOrder, evaluate_clustered, refine, validate_seed_order,
)
from .errors import ContractMatchError, EnumerationLimitError, SolverError, ValidationError
from .greedy import greedy_diversified, greedy_pairwise
from .harness import ExperimentConfig, run_experiment
from .model import dump_instance, generate_instance, load_instance, parse_allocation
from .recourse import evaluate_exact, solve_exact

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ENUMERATION = 3
EXIT_SOLVER = 4

log = logging.getLogger("contractmatch")


def _fmt(value: float) -> str:
    return f"{value:.9f}"


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _alloc_doc(alloc) -> dict:
    return {"n": list(alloc.n), "m": list(alloc.m)}


def _cmd_generate(args) -> int:
    instance = generate_instance(args.q, args.k, args.density, rng_seed=args.seed)
    text = dump_instance(instance)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


def _cmd_solve(args) -> int:
    instance = load_instance(args.instance)
    doc: dict = {"method": args.method}
    if args.method == "exact":
        report = solve_exact(instance)
        doc.update(value=_fmt(report.objective_value), bound_kind="exact", integral=report.integral,
                   allocation=_alloc_doc(report.allocation))
    elif args.method in ("pairwise", "diversified"):
        alloc = greedy_pairwise(instance) if args.method == "pairwise" else greedy_diversified(instance)
        doc.update(value=_fmt(evaluate_exact(instance, alloc)), bound_kind="exact",
                   allocation=_alloc_doc(alloc))
    else:
        upper = args.method == "cluster-upper"
        trace = refine(instance, RefineOptions(
            max_clusters=args.max_clusters, prob_mode=args.prob, ie_depth=args.ie_depth,
            mc_samples=args.mc_samples, seed_select=args.seed_select, reorder=args.reorder == "on",
            upper=upper, rng_seed=args.seed,
        ))
        if upper:
            best = min(trace.steps, key=lambda s: s.upper_value)
            value, alloc = best.upper_value, best.upper_allocation
        else:
            best = max(trace.steps, key=lambda s: s.lower_value)
            value, alloc = best.lower_value, best.allocation
        doc.update(
            value=_fmt(value), bound_kind=UPPER if upper else LOWER, clusters=best.clusters,
            seeds=[s.bits for s in best.seeds], allocation=_alloc_doc(alloc),
            curve=[{"clusters": s.clusters,
                    "value": _fmt(s.upper_value if upper else s.lower_value)} for s in trace.steps],
        )
    _emit(doc, args.out)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    instance = load_instance(args.instance)
    alloc = parse_allocation(Path(args.allocation).read_bytes(), instance)
    if args.method == "exact":
        value = evaluate_exact(instance, alloc)
        doc = {"method": "exact", "value": _fmt(value)}
    else:
        bound = UPPER if args.method == "cluster-upper" else LOWER
        order = validate_seed_order(args.seeds) if args.seeds else SeedOrder.initial(instance.q)
        if order.q != instance.q:
            raise ValidationError(f"seeds have length {order.q}, instance has q={instance.q}", "seeds")
        dist = ProbabilityModel(args.prob, args.ie_depth, args.mc_samples, args.seed).distribution(
            instance, order, bound)
        value = evaluate_clustered(instance, alloc, order, dist)
        doc = {"method": args.method, "value": _fmt(value), "seeds": [s.bits for s in order.seeds],
               "weights": [_fmt(w) for w in dist.weights]}
    _emit(doc, args.out)
    return EXIT_OK


def _cmd_experiment(args) -> int:
    config = ExperimentConfig.load(args.config)
    report = run_experiment(config)
    report.write(args.out)
    print(report.summary_csv(), end="")
    if report.failures:
        log.warning("%d trial(s) failed; see the failures file next to %s", len(report.failures), args.out)
    return EXIT_OK


def _add_prob_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--prob", choices=("exact", "ie", "mc"), default="exact")
    p.add_argument("--ie-depth", type=int, default=2)
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contractmatch", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random instance")
    g.add_argument("--q", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--density", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=_cmd_generate)

    s = sub.add_parser("solve", help="optimize a portfolio")
    s.add_argument("--instance", required=True)
    s.add_argument("--method", required=True,
                   choices=("exact", "pairwise", "diversified", "cluster-lower", "cluster-upper"))
    s.add_argument("--max-clusters", type=int, default=30)
    _add_prob_args(s)
    s.add_argument("--reorder", choices=("on", "off"), default="on")
    s.add_argument("--seed-select", choices=("heuristic", "random"), default="heuristic")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_solve)

    e = sub.add_parser("evaluate", help="expected profit of a fixed allocation")
    e.add_argument("--instance", required=True)
    e.add_argument("--allocation", required=True)
    e.add_argument("--method", choices=("exact", "cluster-lower", "cluster-upper"), default="exact")
    e.add_argument("--seeds", nargs="+", metavar="BITS",
                   help="seed order as bit strings, buy 0 first (default: all-alive, all-fail)")
    _add_prob_args(e)
    e.add_argument("--out")
    e.set_defaults(func=_cmd_evaluate)

    x = sub.add_parser("experiment", help="run a refinement experiment from a JSON config")
    x.add_argument("--config", required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, InvalidSeedOrder, DistributionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except EnumerationLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENUMERATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SolverError, ContractMatchError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
