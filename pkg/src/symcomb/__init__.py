"""Optimal deterministic combs for universal unitary transposition and inversion."""

__version__ = "0.1.0"
