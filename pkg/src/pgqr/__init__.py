"""Penalised generative quantile regression with partial monotonic networks."""

__version__ = "0.1.0"
