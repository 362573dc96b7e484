"""Dicke-state preparation by phase estimation on a collective spin."""

__version__ = "0.1.0"
