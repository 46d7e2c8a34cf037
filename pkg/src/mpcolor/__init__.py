"""Balanced fixed-k conflict-graph coloring: GNN initializer plus repair stack."""

from .baselines import BaselineResult, BruteForceResult, brute_force, dsatur, welsh_powell
from .gnn import GnnConfig, GnnModel, InferenceConfig, iterative_inference
from .graph import (
    BalanceStats,
    ConflictGraph,
    ContractError,
    anchor_violations,
    balance_stats,
    conflict_count,
    harden,
    hard_bound_satisfied,
    total_violations,
)
from .instances import (
    ParseError,
    export_coloring,
    export_edgelist,
    generate_corpus,
    generate_planted,
    generate_uncolorable,
    import_coloring,
    import_edgelist,
    load_corpus,
    parse_dimacs,
)
from .refine import (
    CspResult,
    PipelineConfig,
    SaConfig,
    csp_repair,
    full_pipeline,
    gnn_heuristic_refine,
    sa_balance,
)
from .training import LossConfig, TrainConfig, TrainingDiverged, train, train_two_stage

__version__ = "0.1.0"

__all__ = [
    "BalanceStats",
    "BaselineResult",
    "BruteForceResult",
    "ConflictGraph",
    "ContractError",
    "CspResult",
    "GnnConfig",
    "GnnModel",
    "InferenceConfig",
    "LossConfig",
    "ParseError",
    "PipelineConfig",
    "SaConfig",
    "TrainConfig",
    "TrainingDiverged",
    "anchor_violations",
    "balance_stats",
    "brute_force",
    "conflict_count",
    "csp_repair",
    "dsatur",
    "export_coloring",
    "export_edgelist",
    "full_pipeline",
    "generate_corpus",
    "generate_planted",
    "generate_uncolorable",
    "gnn_heuristic_refine",
    "harden",
    "hard_bound_satisfied",
    "import_coloring",
    "import_edgelist",
    "iterative_inference",
    "load_corpus",
    "parse_dimacs",
    "sa_balance",
    "total_violations",
    "train",
    "train_two_stage",
    "welsh_powell",
]
