"""Pseudo-spectral simulator for zero-Mach-number variable-density flows."""

__version__ = "0.1.0"

from .fields import Grid, ScalarField, VectorField, TensorField  # noqa: F401
