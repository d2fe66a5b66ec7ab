"""Nodal-surplus toolkit for compact metric graphs."""

__version__ = "0.1.0"
