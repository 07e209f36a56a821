"""Numerical laboratory for elliptic stochastic quantization and dimensional reduction."""

__version__ = "0.1.0"
