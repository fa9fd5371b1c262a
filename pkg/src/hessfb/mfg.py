"""
Game density and residuals of the induced mean-field-game pair.

Given a minimizer u, the density is m = F(D2u)^(p-1) on {u > tau}. The
value-function equation F(D2u) = m^(1/(p-1)) is checked pointwise; the
double-divergence equation (F_ij(D2u) m)_{x_i x_j} = 0 is checked weakly
against polynomial bumps (1 - r^2)^3 whose Hessians are known in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import EnergyParams
from .grid import Grid, SymMat, hessian, integrate
from .operators import f_eval, f_grad


class PlacementError(ValueError):
    pass


@dataclass
class DensityField:
    m: np.ndarray
    support: np.ndarray
    tau: float


def default_tau(grid: Grid) -> float:
    return 5.0 * grid.h


def extract_density(grid: Grid, u: np.ndarray, params: EnergyParams,
                    tau: float | None = None) -> DensityField:
    tau = default_tau(grid) if tau is None else tau
    if not tau > 0.0:
        raise ValueError(f"positivity threshold tau must be > 0, got {tau}")
    support = grid.active & (u > tau)
    fval = f_eval(params.operator, hessian(grid, u))
    m = np.where(support, np.abs(fval) ** (params.p - 1.0) * np.sign(fval), 0.0)
    return DensityField(m=m, support=support, tau=tau)


@dataclass
class ResidualField:
    values: np.ndarray
    sup: float
    l1: float


def hj_residual(grid: Grid, u: np.ndarray, dens: DensityField,
                params: EnergyParams) -> ResidualField:
    m = dens.m[dens.support]
    if np.any(m < 0.0):
        raise ValueError("density must be non-negative on its support")
    r = np.zeros(grid.shape)
    fval = f_eval(params.operator, hessian(grid, u))
    r[dens.support] = fval[dens.support] - m ** (1.0 / (params.p - 1.0))
    return ResidualField(values=r, sup=float(np.max(np.abs(r), initial=0.0)),
                         l1=integrate(grid, np.abs(r)))


def bump_hessian(x: np.ndarray, y: np.ndarray, center, radius: float) -> SymMat:
    """Hessian of (1 - |x - c|^2 / r^2)^3, zero outside the support disk."""
    zx, zy = x - center[0], y - center[1]
    r2 = radius * radius
    w = 1.0 - (zx * zx + zy * zy) / r2
    inside = w > 0.0
    a = 24.0 * w / (r2 * r2)
    b = 6.0 * w * w / r2
    hxx = np.where(inside, a * zx * zx - b, 0.0)
    hxy = np.where(inside, a * zx * zy, 0.0)
    hyy = np.where(inside, a * zy * zy - b, 0.0)
    return SymMat(hxx, hxy, hyy)


def bump_value(x, y, center, radius):
    w = 1.0 - ((x - center[0]) ** 2 + (y - center[1]) ** 2) / radius**2
    return np.where(w > 0.0, w**3, 0.0)


@dataclass
class TestFunctionFamily:
    centers: list[tuple[float, float]]
    radii: list[float]

    __test__ = False

    def __len__(self):
        return len(self.centers)

    def check_placement(self, grid: Grid, support: np.ndarray) -> None:
        for k, (c, r) in enumerate(zip(self.centers, self.radii)):
            if not r > 0.0:
                raise PlacementError(f"bump {k}: radius must be > 0")
            if np.hypot(*c) + r >= 1.0:
                raise PlacementError(f"bump {k} (center={c}, radius={r}) leaves the unit disk")
            covered = (grid.x - c[0]) ** 2 + (grid.y - c[1]) ** 2 < r * r
            if np.any(covered & ~support):
                raise PlacementError(
                    f"bump {k} (center={c}, radius={r}) escapes the density support")


def random_bumps(grid: Grid, support: np.ndarray, count: int, seed: int = 0,
                 radius: tuple[float, float] = (0.1, 0.25), max_tries: int = 10_000
                 ) -> TestFunctionFamily:
    """Draw ``count`` bumps whose support disks lie inside ``support``."""
    rng = np.random.default_rng(seed)
    fam = TestFunctionFamily([], [])
    for _ in range(max_tries):
        if len(fam) == count:
            return fam
        r = float(rng.uniform(*radius))
        rho = float(np.sqrt(rng.uniform(0.0, 1.0))) * (1.0 - r)
        phi = float(rng.uniform(0.0, 2.0 * np.pi))
        c = (rho * np.cos(phi), rho * np.sin(phi))
        trial = TestFunctionFamily([c], [r])
        try:
            trial.check_placement(grid, support)
        except PlacementError:
            continue
        fam.centers.append(c)
        fam.radii.append(r)
    raise PlacementError(f"could only place {len(fam)} of {count} bumps inside the support")


def fp_residual(grid: Grid, u: np.ndarray, dens: DensityField, params: EnergyParams,
                tests: TestFunctionFamily) -> list[float]:
    """Weak residuals R_phi = integral of F_ij(D2u) m phi_{x_i x_j}, one per bump."""
    tests.check_placement(grid, dens.support)
    hs = hessian(grid, u)
    s = dens.support
    # F_ij is only needed where m lives; elsewhere feed I so eta = 0 stays defined
    hs = SymMat(np.where(s, hs.xx, 1.0), np.where(s, hs.xy, 0.0), np.where(s, hs.yy, 1.0))
    coeff = f_grad(params.operator, hs).scale(np.where(s, dens.m, 0.0))
    out = []
    for c, r in zip(tests.centers, tests.radii):
        out.append(integrate(grid, coeff.inner(bump_hessian(grid.x, grid.y, c, r))))
    return out


def density_integrability(grid: Grid, dens: DensityField, p: float) -> float:
    """Discrete L^{p/(p-1)} norm of the density."""
    if not p > 1.0:
        raise ValueError("p must be > 1")
    q = p / (p - 1.0)
    return integrate(grid, np.abs(dens.m) ** q) ** (1.0 / q)
