"""Render wncs experiment CSVs into the comparison figures."""

__version__ = "0.1.0"
