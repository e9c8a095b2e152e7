"""Numerical homogenisation of linear-growth free-discontinuity energies."""

__version__ = "0.1.0"
