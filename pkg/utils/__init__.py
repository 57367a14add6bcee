"""
Utilities for the FedQS simulator.
"""
from .analytics import log_event, read_events, get_summary, clear_events

__all__ = ["log_event", "read_events", "get_summary", "clear_events"]
