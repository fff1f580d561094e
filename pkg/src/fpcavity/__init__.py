"""Modeling and data analysis for superconducting Fabry-Perot microwave cavities."""

__version__ = "0.1.0"
