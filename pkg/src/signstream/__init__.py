"""Dual-stream sign recognition and translation at desk scale."""

__version__ = "0.1.0"
