"""Sparse linear identifiable multivariate modeling."""

__version__ = "0.1.0"
