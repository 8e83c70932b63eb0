"""Learned ABC summary statistics with partially exchangeable networks."""

__version__ = "0.1.0"
