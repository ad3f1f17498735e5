"""Explicit ReLU network constructions and verification tools."""

__version__ = "0.1.0"
