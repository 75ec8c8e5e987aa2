"""Simulation library for testable learning with queries, refutation and MQ-SQ oracles."""

__version__ = "0.1.0"
