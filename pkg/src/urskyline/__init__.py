"""Uncertain reverse skyline queries and influence scores over probabilistic products."""

from .core import (
    QUERY_ID,
    CustomerSet,
    DimensionError,
    Midpoint,
    ProbPoint,
    ProductSet,
    dominates_wrt,
    midpoint_of,
    orthant_of,
)
from .data import GenSpec, generate, load_csv, normalize, save_csv, wine_fixture
from .dominance import (
    UdsResult,
    all_dsky_probabilities,
    dsky_probability,
    favorability_rating,
    favorite_probability,
    influence_brute,
    prob_order_condition,
    ud_dominates,
    uds_brute,
    urs_brute,
)
from .index import RTree, build_tree, midpoint_tree
from .parallel import ParallelEngine, parallel_influence, parallel_urs, partition
from .query import (
    InfluenceReport,
    UmslSet,
    UrsEngine,
    UrsResult,
    compute_umsl,
    compute_umsl_optimized,
    compute_uds_with_probs,
    compute_urs,
    compute_urs_optimized,
    influence_score,
    uncertain_reverse_skyline,
)

__all__ = [
    "QUERY_ID",
    "CustomerSet",
    "DimensionError",
    "Midpoint",
    "ProbPoint",
    "ProductSet",
    "dominates_wrt",
    "midpoint_of",
    "orthant_of",
    "GenSpec",
    "generate",
    "load_csv",
    "normalize",
    "save_csv",
    "wine_fixture",
    "UdsResult",
    "all_dsky_probabilities",
    "dsky_probability",
    "favorability_rating",
    "favorite_probability",
    "influence_brute",
    "prob_order_condition",
    "ud_dominates",
    "uds_brute",
    "urs_brute",
    "RTree",
    "build_tree",
    "midpoint_tree",
    "ParallelEngine",
    "parallel_influence",
    "parallel_urs",
    "partition",
    "InfluenceReport",
    "UmslSet",
    "UrsEngine",
    "UrsResult",
    "compute_umsl",
    "compute_umsl_optimized",
    "compute_uds_with_probs",
    "compute_urs",
    "compute_urs_optimized",
    "influence_score",
    "uncertain_reverse_skyline",
]
