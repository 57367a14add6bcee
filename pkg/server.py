"""
FedQS simulator - MCP server.
Entry point for the MCP server.
"""
import logging

from mcp.server.fastmcp import FastMCP

# Create MCP server instance
mcp = FastMCP("FedQSSimulator")

# Register tools
from tools import register_tools
register_tools(mcp)


def main():
    """Main entry point for script execution."""
    logging.basicConfig(level=logging.WARNING)
    mcp.run()


if __name__ == "__main__":
    main()
