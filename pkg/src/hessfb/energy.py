"""
Discrete free-boundary energy

    E[u] = sum_k w_k F(D2u_k)^p  +  Lambda * sum_k w_k H(u_k)

with H either the sharp indicator of {u > 0} or a C1 cubic ramp of width delta.
The gradient is the exact derivative of this discrete sum.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import Grid, hessian, hessian_adjoint, integrate
from .operators import OperatorSpec, f_eval, f_grad

MODES = ("sharp", "smooth")


class EnergyOverflowError(FloatingPointError):
    def __init__(self, node: tuple[int, int], what: str):
        super().__init__(f"non-finite {what} at node (iy={node[0]}, ix={node[1]})")
        self.node = node


class NondifferentiableError(ValueError):
    pass


@dataclass(frozen=True)
class EnergyParams:
    p: float = 2.0
    Lambda: float = 1.0
    delta: float = 1e-2
    operator: OperatorSpec = field(default_factory=OperatorSpec)

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError(f"energy.p must satisfy p > 1 (p > d/2 with d = 2), got {self.p}")
        if not self.Lambda >= 0.0:
            raise ValueError(f"energy.Lambda must be >= 0, got {self.Lambda}")
        if not self.delta >= 0.0:
            raise ValueError(f"energy.delta must be >= 0, got {self.delta}")

    def with_(self, **kw) -> "EnergyParams":
        d = {"p": self.p, "Lambda": self.Lambda, "delta": self.delta, "operator": self.operator}
        d.update(kw)
        return EnergyParams(**d)


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    measure: float
    total: float

    def to_json(self) -> dict:
        return asdict(self)


def heaviside(s: np.ndarray, delta: float) -> np.ndarray:
    """C1 cubic ramp: 0 below 0, 1 above delta."""
    t = np.clip(s / delta, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def heaviside_prime(s: np.ndarray, delta: float) -> np.ndarray:
    t = np.clip(s / delta, 0.0, 1.0)
    return 6.0 * t * (1.0 - t) / delta


def positivity(u: np.ndarray, delta: float, mode: str) -> np.ndarray:
    if mode == "sharp":
        return (u > 0.0).astype(float)
    if mode == "smooth":
        if not delta > 0.0:
            raise ValueError("smooth measure needs delta > 0")
        return heaviside(u, delta)
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def smoothed_measure(grid: Grid, u: np.ndarray, delta: float, mode: str = "smooth") -> float:
    return integrate(grid, positivity(u, delta, mode))


def _check_finite(grid: Grid, arr: np.ndarray, what: str) -> None:
    bad = grid.active & ~np.isfinite(arr)
    if bad.any():
        iy, ix = np.argwhere(bad)[0]
        raise EnergyOverflowError((int(iy), int(ix)), what)


def dirichlet_density(grid: Grid, u: np.ndarray, params: EnergyParams) -> np.ndarray:
    """Nodewise F(D2u)^p."""
    with np.errstate(all="ignore"):
        fval = f_eval(params.operator, hessian(grid, u))
        dens = np.where(grid.active, fval, 0.0) ** params.p
    _check_finite(grid, dens, "F(D2u)^p")
    return dens


def energy(grid: Grid, u: np.ndarray, params: EnergyParams, mode: str = "smooth") -> EnergyBreakdown:
    _check_finite(grid, np.where(grid.active, u, 0.0), "u")
    dirichlet = integrate(grid, dirichlet_density(grid, u, params))
    measure = 0.0
    if params.Lambda > 0.0:
        measure = params.Lambda * smoothed_measure(grid, u, params.delta, mode)
    return EnergyBreakdown(dirichlet, measure, dirichlet + measure)


def energy_gradient(grid: Grid, u: np.ndarray, params: EnergyParams) -> np.ndarray:
    """Exact gradient of the smooth-mode discrete energy with respect to nodal values.

    ``np.sum(energy_gradient(u) * v)`` is the directional derivative of
    ``energy(u, mode="smooth").total`` along ``v``.
    """
    op = params.operator
    if not params.delta > 0.0:
        raise NondifferentiableError("energy gradient needs delta > 0")
    if op.variant != "linear-trace" and not op.eta > 0.0:
        raise NondifferentiableError("energy gradient needs eta > 0 for norm operators")
    hess = hessian(grid, u)
    with np.errstate(all="ignore"):
        fval = np.where(grid.active, f_eval(op, hess), 0.0)
        coeff = params.p * fval ** (params.p - 1.0)
    _check_finite(grid, coeff, "F(D2u)^(p-1)")
    g = hessian_adjoint(grid, f_grad(op, hess).scale(coeff))
    if params.Lambda > 0.0:
        g = g + params.Lambda * grid.weights * heaviside_prime(u, params.delta)
    return np.where(grid.active, g, 0.0)
