"""Adaptive, policy-invariant reward design for tabular MDPs."""

__version__ = "0.1.0"
