"""Counting integer points with form values in shrinking intervals."""

__version__ = "0.1.0"
