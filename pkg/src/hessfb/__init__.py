"""Numerical lab for the Hessian-dependent free-boundary energy on the unit disk.

int F(D2u)^p + Lambda |{u > 0}|, its mean-field-game pair (u, m = F^(p-1)),
free-boundary diagnostics, first variations, and the Lambda -> 0 sweep.
"""

from .energy import EnergyParams, energy, energy_gradient
from .grid import Grid, make_grid
from .operators import OperatorSpec
from .solver import SolveConfig, builtin_boundary, minimize, minimize_unpenalized

__all__ = ["EnergyParams", "Grid", "OperatorSpec", "SolveConfig", "builtin_boundary",
           "energy", "energy_gradient", "make_grid", "minimize", "minimize_unpenalized"]
__version__ = "0.1.0"
