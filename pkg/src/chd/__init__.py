"""Coronary heart disease prediction toolkit."""

__version__ = "0.1.0"
