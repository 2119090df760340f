"""Bayesian multifile record linkage and duplicate detection."""

__version__ = "0.1.0"
