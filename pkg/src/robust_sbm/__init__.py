"""Robust community recovery in sparse stochastic block models."""

__version__ = "0.1.0"
