"""Adaptive temporal compressive sensing for video."""

__version__ = "0.1.0"
