"""Numerical laboratory for the weighted Kato square-root estimate."""

__version__ = "0.1.0"
