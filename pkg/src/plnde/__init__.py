"""Poisson-lognormal differential expression with spike-and-slab fold changes."""

__version__ = "0.1.0"
