"""
Inner variations u_t = u o Psi_t^{-1} with Psi_t(x) = x + t xi(x).

Deformations are built from the polynomial bump (1 - |x - c|^2 / R^2)^3 and
carry closed-form first and second derivatives. The analytic derivative of the
Hessian energy uses the pre-integration-by-parts form

    d/dt E[u_t] = -p * int F^{p-1} F_ij(D2u) M_ij + int F^p div xi,
    M = D2u Dxi + Dxi^T D2u + sum_k u_{x_k} D2xi_k,

and is cross-checked against central differences of E along the pushforward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyParams, dirichlet_density
from .grid import Grid, SymMat, gradient, hessian, integrate
from .operators import f_eval, f_grad

KINDS = ("translate", "radial", "solenoidal")


class DeformationTooLargeError(ValueError):
    pass


def _bump_derivatives(x, y, center, radius, power=3):
    """Value and first three derivatives of (1 - q)^k, q = |x - c|^2 / R^2."""
    k = power
    z = np.stack([x - center[0], y - center[1]])
    r2 = radius * radius
    w = 1.0 - (z[0] ** 2 + z[1] ** 2) / r2
    inside = w > 0.0
    w = np.where(inside, w, 0.0)
    q1 = 2.0 * z / r2
    q2 = 2.0 / r2
    eye = np.eye(2).reshape((2, 2) + (1,) * w.ndim)
    phi = w**k
    d1 = -k * w ** (k - 1) * q1
    d2 = k * (k - 1) * w ** (k - 2) * q1[:, None] * q1[None, :] - k * w ** (k - 1) * q2 * eye
    d3 = (-k * (k - 1) * (k - 2) * w ** (k - 3)
          * q1[:, None, None] * q1[None, :, None] * q1[None, None, :]
          + k * (k - 1) * w ** (k - 2) * q2 * (eye[:, :, None] * q1[None, None, :]
                                               + eye[None, :, :] * q1[:, None, None]
                                               + eye[:, None, :] * q1[None, :, None]))
    mask = inside.astype(float)
    return phi * mask, d1 * mask, d2 * mask, d3 * mask


@dataclass(frozen=True)
class Deformation:
    """Compactly supported vector field xi built on a bump of radius ``radius``.

    ``translate``: xi = v * phi; ``radial``: xi = s * (x - c) * phi;
    ``solenoidal``: xi = s * R^2 * (-phi_y, phi_x), which is divergence free.
    For ``translate`` ``vector`` is v; otherwise ``vector[0]`` is the scale s.
    ``power`` is the exponent k of the profile (1 - q)^k; k = 3 is the C2
    minimum, larger k gives smoother second derivatives.
    """

    kind: str
    center: tuple[float, float]
    radius: float
    vector: tuple[float, float] = (1.0, 0.0)
    power: int = 3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown deformation kind {self.kind!r}")
        if self.power < 3:
            raise ValueError("deformation profile power must be >= 3 (C2 field)")
        if np.hypot(*self.center) + self.radius >= 1.0:
            raise ValueError("deformation support must lie strictly inside the unit disk")

    def evaluate(self, x, y):
        """Return (xi, Dxi, D2xi) with shapes (2, ...), (2, 2, ...), (2, 2, 2, ...).

        Dxi[k, j] = d xi_k / d x_j and D2xi[k, i, j] = d^2 xi_k / d x_i d x_j.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        phi, d1, d2, d3 = _bump_derivatives(x, y, self.center, self.radius, self.power)
        eye = np.eye(2)[(...,) + (None,) * x.ndim]
        if self.kind == "translate":
            v = np.asarray(self.vector, dtype=float)[(...,) + (None,) * x.ndim]
            xi = v * phi
            dxi = v[:, None] * d1[None, :]
            d2xi = v[:, None, None] * d2[None, :, :]
        elif self.kind == "radial":
            s = self.vector[0]
            z = np.stack([x - self.center[0], y - self.center[1]])
            xi = s * z * phi
            dxi = s * (eye * phi + z[:, None] * d1[None, :])
            d2xi = s * (eye[:, :, None] * d1[None, None, :] + eye[:, None, :] * d1[None, :, None]
                        + z[:, None, None] * d2[None, :, :])
        else:
            s = self.vector[0] * self.radius**2
            xi = s * np.stack([-d1[1], d1[0]])
            dxi = s * np.stack([-d2[1], d2[0]])
            d2xi = s * np.stack([-d3[1], d3[0]])
        return xi, dxi, d2xi

    def max_jacobian(self, samples: int = 201) -> float:
        c = np.linspace(-self.radius, self.radius, samples)
        gx, gy = np.meshgrid(c + self.center[0], c + self.center[1])
        _, dxi, _ = self.evaluate(gx, gy)
        return float(np.max(np.sqrt(np.sum(dxi**2, axis=(0, 1)))))


@dataclass(frozen=True)
class DeformationSum:
    terms: tuple[tuple[float, Deformation], ...] = field(default_factory=tuple)

    def evaluate(self, x, y):
        out = None
        for coef, d in self.terms:
            parts = d.evaluate(x, y)
            parts = tuple(coef * p for p in parts)
            out = parts if out is None else tuple(a + b for a, b in zip(out, parts))
        if out is None:
            x = np.asarray(x, dtype=float)
            return (np.zeros((2,) + x.shape), np.zeros((2, 2) + x.shape),
                    np.zeros((2, 2, 2) + x.shape))
        return out

    def max_jacobian(self, samples: int = 201) -> float:
        return float(sum(abs(c) * d.max_jacobian(samples) for c, d in self.terms))


ZERO = DeformationSum(())


def divergence_of(xi_field, grid: Grid) -> np.ndarray:
    _, dxi, _ = xi_field.evaluate(grid.x, grid.y)
    return dxi[0, 0] + dxi[1, 1]


def build_M(grid: Grid, u: np.ndarray, xi_field) -> SymMat:
    hs = hessian(grid, u)
    ux, uy = gradient(grid, u)
    _, dxi, d2xi = xi_field.evaluate(grid.x, grid.y)
    hmat = np.array([[hs.xx, hs.xy], [hs.xy, hs.yy]])
    hd = np.einsum("ik...,kj...->ij...", hmat, dxi)
    m = hd + np.swapaxes(hd, 0, 1) + ux * d2xi[0] + uy * d2xi[1]
    m = 0.5 * (m + np.swapaxes(m, 0, 1))
    act = grid.active
    return SymMat(np.where(act, m[0, 0], 0.0), np.where(act, m[0, 1], 0.0),
                  np.where(act, m[1, 1], 0.0))


def energy_variation_analytic(grid: Grid, u: np.ndarray, xi_field,
                              params: EnergyParams) -> float:
    op, p = params.operator, params.p
    hs = hessian(grid, u)
    fval = np.where(grid.active, f_eval(op, hs), 0.0)
    mm = build_M(grid, u, xi_field)
    inner = f_grad(op, hs).inner(mm)
    div = divergence_of(xi_field, grid)
    return (-p * integrate(grid, fval ** (p - 1.0) * inner)
            + integrate(grid, fval**p * div))


def measure_variation(grid: Grid, u: np.ndarray, xi_field) -> float:
    div = divergence_of(xi_field, grid)
    return integrate(grid, np.where(u > 0.0, div, 0.0))


def _keys_weights(s):
    """Cubic convolution weights (a = -1/2) for offsets -1, 0, 1, 2."""
    a = -0.5

    def k(t):
        t = np.abs(t)
        return np.where(t <= 1, (a + 2) * t**3 - (a + 3) * t**2 + 1,
                        np.where(t < 2, a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a, 0.0))

    return [k(s + 1.0), k(s), k(s - 1.0), k(s - 2.0)]


def bicubic(grid: Grid, u: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    fx = (px + 1.0) / grid.h
    fy = (py + 1.0) / grid.h
    ix = np.floor(fx).astype(int)
    iy = np.floor(fy).astype(int)
    if np.any((ix < 1) | (iy < 1) | (ix > grid.n - 3) | (iy > grid.n - 3)):
        raise DeformationTooLargeError("interpolation stencil leaves the grid")
    wx = _keys_weights(fx - ix)
    wy = _keys_weights(fy - iy)
    out = np.zeros_like(px, dtype=float)
    for a in range(4):
        for b in range(4):
            out += wy[a] * wx[b] * u[iy + a - 1, ix + b - 1]
    return out


def pushforward(grid: Grid, u: np.ndarray, xi_field, t: float,
                max_iter: int = 20, tol: float = 1e-12) -> np.ndarray:
    """u_t(x) = u(y) where y + t xi(y) = x, by fixed-point iteration and bicubic lookup."""
    if abs(t) * xi_field.max_jacobian() >= 0.5:
        raise DeformationTooLargeError(f"|t| sup|Dxi| must stay below 1/2 (t={t})")
    out = np.array(u, dtype=float)
    if t == 0.0:
        return out
    x0, y0 = grid.x[grid.active], grid.y[grid.active]
    xi, _, _ = xi_field.evaluate(x0, y0)
    moving = (xi[0] != 0.0) | (xi[1] != 0.0)
    if not moving.any():
        return out
    px, py = x0[moving], y0[moving]
    yx, yy = px.copy(), py.copy()
    for _ in range(max_iter):
        v, _, _ = xi_field.evaluate(yx, yy)
        nx, ny = px - t * v[0], py - t * v[1]
        change = max(np.max(np.abs(nx - yx)), np.max(np.abs(ny - yy)))
        yx, yy = nx, ny
        if change <= tol:
            break
    else:
        raise DeformationTooLargeError("fixed-point iteration for the inverse map did not converge")
    vals = out[grid.active]
    vals[moving] = bicubic(grid, u, yx, yy)
    out[grid.active] = vals
    return out


def energy_variation_numeric(grid: Grid, u: np.ndarray, xi_field, params: EnergyParams,
                             t_step: float = 1e-3) -> float:
    """Central difference of the Hessian energy along u_t, Richardson-extrapolated over t, t/2."""
    p0 = params.with_(Lambda=0.0)

    def e(t):
        return integrate(grid, dirichlet_density(grid, pushforward(grid, u, xi_field, t), p0))

    def central(t):
        return (e(t) - e(-t)) / (2.0 * t)

    return (4.0 * central(0.5 * t_step) - central(t_step)) / 3.0
