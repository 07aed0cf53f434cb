"""Lifespan measurement of Tor v2 hidden services from partial HSDir coverage.

Simulation of descriptor placement, count-based lifespan estimation, and a
multi-party protocol that aggregates encrypted per-service counts.
"""

__version__ = "0.1.0"
