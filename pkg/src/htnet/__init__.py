"""Horvitz-Thompson estimation under network interference, by exact enumeration."""

__version__ = "0.1.0"
