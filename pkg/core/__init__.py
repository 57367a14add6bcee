"""
Core of the FedQS simulator: models, numerics, data, protocol, engine and metrics.
"""
from .errors import (
    FedQSError, ContractViolation, PayloadMismatch, StaleUpdateError,
    DataFormatError, ConfigError, SimulationError,
)
from .models import (
    ModelKind, Aggregation, Strategy, Mode, Quadrant, SimilarityKind, PayloadKind,
    ModelSpec, LabeledDataset, SyntheticSpec, PartitionPlan, Hyper, CostModel,
    SimConfig, LocalUpdate, Trace, RoundRecord, Summary, BoundParams,
)
from .engine import ClientData, Simulator, simulate, run_safl, run_sync, replay_aggregation

__all__ = [
    # Errors
    "FedQSError",
    "ContractViolation",
    "PayloadMismatch",
    "StaleUpdateError",
    "DataFormatError",
    "ConfigError",
    "SimulationError",
    # Models
    "ModelKind",
    "Aggregation",
    "Strategy",
    "Mode",
    "Quadrant",
    "SimilarityKind",
    "PayloadKind",
    "ModelSpec",
    "LabeledDataset",
    "SyntheticSpec",
    "PartitionPlan",
    "Hyper",
    "CostModel",
    "SimConfig",
    "LocalUpdate",
    "Trace",
    "RoundRecord",
    "Summary",
    "BoundParams",
    # Engine
    "ClientData",
    "Simulator",
    "simulate",
    "run_safl",
    "run_sync",
    "replay_aggregation",
]
