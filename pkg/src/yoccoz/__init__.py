"""Numerical laboratory for the Yoccoz extension of critical circle linearizations."""

__version__ = "0.1.0"
