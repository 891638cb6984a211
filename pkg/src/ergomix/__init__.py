"""Spectral Galerkin simulator and ergodicity checks for locally monotone SPDEs."""

__version__ = "0.1.0"
