"""
Tests for the FedQS simulator.
"""
