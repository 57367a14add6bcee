"""
MCP tools for the FedQS simulator.
"""
from .handlers import register_tools

__all__ = ["register_tools"]
