"""Algorithmic toolkit for complex math-expression recognition work."""

__version__ = "0.1.0"
