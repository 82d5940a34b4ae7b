"""Numerical laboratory for fully cross-diffusive pursuit-evasion systems."""

__version__ = "0.1.0"
