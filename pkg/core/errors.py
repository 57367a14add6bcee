"""
Exception hierarchy for the FedQS simulator.
"""
from typing import Optional


class FedQSError(Exception):
    """Root of every error raised by this package."""


class ContractViolation(FedQSError, ValueError):
    """A precondition of an operation was not met (shapes, ranges, emptiness)."""


class PayloadMismatch(ContractViolation):
    """An update carries the wrong payload variant for the aggregation rule."""


class StaleUpdateError(ContractViolation):
    """A synchronous round received an update trained on an older global model."""


class DataFormatError(FedQSError, ValueError):
    """Malformed tabular input."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ConfigError(FedQSError):
    """Invalid experiment configuration."""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class SimulationError(FedQSError):
    """Failure inside the event loop, tagged with the global round it happened in."""

    def __init__(self, message: str, round_index: int):
        self.round = round_index
        super().__init__(f"round {round_index}: {message}")
