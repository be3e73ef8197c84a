"""Mirrored Stein samplers for constrained domains."""

__version__ = "0.1.0"
