"""Axisymmetric free-boundary ideal MHD in Lagrangian coordinates."""

from ._accel import USE_NUMBA
from .grid import BoundaryFunction, Grid, ScalarField

__all__ = ["Grid", "ScalarField", "BoundaryFunction", "USE_NUMBA"]
__version__ = "0.1.0"
