"""Lurking-variable detection through dimensional analysis."""

__version__ = "0.1.0"
