"""Numerical laboratory for slow-fast jump diffusions with delay."""
__version__ = "0.1.0"
