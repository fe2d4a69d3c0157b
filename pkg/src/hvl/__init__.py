"""Harmonics Virtual Lights renderer."""

__version__ = "0.1.0"
