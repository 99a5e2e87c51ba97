"""Randomized-response mechanisms for local differential privacy.

Modified Warner, Simmons and Christofides mechanisms (whole-population
surveys) and the improved Christofides mechanism (cards drawn without
replacement), with exact variances, privacy budgets, optimal designs and a
Monte Carlo / enumeration verification layer.
"""

__version__ = "0.1.0"
