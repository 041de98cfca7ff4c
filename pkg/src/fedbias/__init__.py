"""fedbias: a deterministic federated-learning simulator for studying
fairness-targeted model poisoning under robust and fairness-aware aggregation."""

__version__ = "0.1.0"

from .aggregation import AggregationRule, ClientUpdate
from .attack import AttackConfig
from .data import DatasetSchema, TabularDataset
from .fairness import FairnessReport
from .simulator import (DatasetConfig, ExperimentConfig, PartitionSpec, RunResult,
                        Seeds, attack_impact, run, run_grid, run_repeats)

__all__ = [
    "AggregationRule", "AttackConfig", "ClientUpdate", "DatasetConfig",
    "DatasetSchema", "ExperimentConfig", "FairnessReport", "PartitionSpec",
    "RunResult", "Seeds", "TabularDataset", "attack_impact", "run", "run_grid",
    "run_repeats", "__version__",
]
