"""Truncated matrix models of reduced free products and related constructions."""

__version__ = "0.1.0"
