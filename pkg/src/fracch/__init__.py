"""Spectral solvers and convergence experiments for fractional Cahn-Hilliard systems."""

__version__ = "0.1.0"
