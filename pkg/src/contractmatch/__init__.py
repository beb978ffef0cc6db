"""Portfolio optimization for buy/sell contracts whose buys may fail.

Exact two-stage solves over every failure configuration, greedy baselines,
and cluster-based lower/upper bounds that scale past exhaustive enumeration.
"""

from .clustering import (
    ClusterDistribution, ProbabilityModel, RefineOptions, SeedOrder, cluster_probs_exact,
    cluster_probs_ie, cluster_probs_mc, refine, reorder_seeds, select_seed, solve_clustered,
)
from .errors import ContractMatchError, EnumerationLimitError, SolverError, ValidationError
from .greedy import greedy_diversified, greedy_pairwise
from .model import (
    Allocation, BuyContractType, FailureConfiguration, ProblemInstance, SellContractType,
    generate_instance, load_instance, parse_instance,
)
from .recourse import evaluate_exact, solve_exact, solve_matching

__version__ = "0.1.0"

__all__ = [
    "Allocation", "BuyContractType", "ClusterDistribution", "ContractMatchError", "EnumerationLimitError",
    "FailureConfiguration", "ProbabilityModel", "ProblemInstance", "RefineOptions", "SeedOrder",
    "SellContractType", "SolverError", "ValidationError", "cluster_probs_exact", "cluster_probs_ie",
    "cluster_probs_mc", "evaluate_exact", "generate_instance", "greedy_diversified", "greedy_pairwise",
    "load_instance", "parse_instance", "refine", "reorder_seeds", "select_seed", "solve_clustered",
    "solve_exact", "solve_matching",
]
