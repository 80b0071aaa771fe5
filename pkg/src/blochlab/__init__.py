"""Singular measures on the circle, their transforms, and dyadic membership criteria."""

__version__ = "0.1.0"
