"""Numerical checks of localization for random Jacobi operators."""

__version__ = "0.1.0"
