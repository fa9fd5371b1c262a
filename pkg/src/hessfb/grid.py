"""
Masked Cartesian grid over the unit disk.

Nodes sit on [-1, 1]^2 with spacing h = 2/(n-1). Each node owns the dual cell
[x - h/2, x + h/2] x [y - h/2, y + h/2]; its quadrature weight is h^2 times the
fraction of that cell inside the unit disk, estimated by 4x4 subsampling.
Nodes with zero weight are exterior and carry no degrees of freedom.

Fields are plain ``(n, n)`` float arrays indexed ``[iy, ix]`` (row = y index,
column = x index). Derivative operators are assembled once per grid as sparse
matrices acting on the row-major flattening.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

EXTERIOR = 0
BAND = 1
INTERIOR = 2

SUBSAMPLES = 4


class GridSizeError(ValueError):
    """Raised when a grid is too small (or even-sized) for the stencils."""


class SymMat(NamedTuple):
    """Per-node symmetric 2x2 matrix field, stored by its three components."""

    xx: np.ndarray
    xy: np.ndarray
    yy: np.ndarray

    def inner(self, other: "SymMat") -> np.ndarray:
        """Nodewise Frobenius inner product (cross term counted twice)."""
        return self.xx * other.xx + 2.0 * self.xy * other.xy + self.yy * other.yy

    def frobenius(self) -> np.ndarray:
        return np.sqrt(self.inner(self))

    def scale(self, a) -> "SymMat":
        return SymMat(a * self.xx, a * self.xy, a * self.yy)

    def __add__(self, other):  # type: ignore[override]
        return SymMat(self.xx + other.xx, self.xy + other.xy, self.yy + other.yy)

    def __sub__(self, other):
        return SymMat(self.xx - other.xx, self.xy - other.xy, self.yy - other.yy)


@dataclass(frozen=True, eq=False)
class Grid:
    n: int
    h: float
    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray
    weights: np.ndarray
    dx: sp.csr_matrix
    dy: sp.csr_matrix
    dxx: sp.csr_matrix
    dyy: sp.csr_matrix
    dxy: sp.csr_matrix

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def active(self) -> np.ndarray:
        """Non-exterior nodes."""
        return self.mask != EXTERIOR

    @property
    def interior(self) -> np.ndarray:
        return self.mask == INTERIOR

    @property
    def band(self) -> np.ndarray:
        return self.mask == BAND

    @property
    def radius(self) -> np.ndarray:
        return np.hypot(self.x, self.y)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def field(self, f) -> np.ndarray:
        """Evaluate ``f(x, y)`` on the grid, zeroing exterior nodes."""
        values = np.broadcast_to(np.asarray(f(self.x, self.y), dtype=float), self.shape)
        return np.where(self.active, values, 0.0)

    def deep_interior(self, layers: int) -> np.ndarray:
        """Interior nodes at least ``layers`` node-steps away from the band."""
        keep = self.interior.copy()
        for _ in range(layers):
            shrunk = keep.copy()
            shrunk[1:, :] &= keep[:-1, :]
            shrunk[:-1, :] &= keep[1:, :]
            shrunk[:, 1:] &= keep[:, :-1]
            shrunk[:, :-1] &= keep[:, 1:]
            keep = shrunk
        return keep


def _cell_fractions(n: int, h: float) -> np.ndarray:
    c = np.linspace(-1.0, 1.0, n)
    offs = (np.arange(SUBSAMPLES) + 0.5) / SUBSAMPLES - 0.5
    sx = c[None, :, None, None] + h * offs[None, None, None, :]
    sy = c[:, None, None, None] + h * offs[None, None, :, None]
    inside = sx**2 + sy**2 <= 1.0
    return inside.mean(axis=(2, 3))


def _classify(fraction: np.ndarray) -> np.ndarray:
    active = fraction > 0.0
    padded = np.pad(active, 1, constant_values=False)
    n = active.shape[0]
    all_nb = np.ones_like(active)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            all_nb &= padded[1 + di : 1 + di + n, 1 + dj : 1 + dj + n]
    mask = np.full(active.shape, EXTERIOR, dtype=np.int8)
    mask[active] = BAND
    mask[active & all_nb] = INTERIOR
    return mask


# One-dimensional stencils as (offsets, coefficients); the caller scales by h.
_FIRST = [
    ((-1, 1), (-0.5, 0.5)),
    ((0, 1, 2), (-1.5, 2.0, -0.5)),
    ((0, -1, -2), (1.5, -2.0, 0.5)),
    ((0, 1), (-1.0, 1.0)),
    ((0, -1), (1.0, -1.0)),
]
_SECOND = [
    ((-1, 0, 1), (1.0, -2.0, 1.0)),
    ((0, 1, 2, 3), (2.0, -5.0, 4.0, -1.0)),
    ((0, -1, -2, -3), (2.0, -5.0, 4.0, -1.0)),
    ((0, 1, 2), (1.0, -2.0, 1.0)),
    ((0, -1, -2), (1.0, -2.0, 1.0)),
]


def _line_operator(active: np.ndarray, stencils, axis: int, scale: float) -> sp.csr_matrix:
    """Pick, per node, the first stencil along ``axis`` whose points are all active."""
    n = active.shape[0]
    rows, cols, vals = [], [], []
    idx = np.arange(n * n).reshape(n, n)
    unused = active.copy()
    for offsets, coeffs in stencils:
        ok = unused.copy()
        for o in offsets:
            shifted = np.zeros_like(active)
            if axis == 1:
                if o >= 0:
                    shifted[:, : n - o] = active[:, o:]
                else:
                    shifted[:, -o:] = active[:, : n + o]
            else:
                if o >= 0:
                    shifted[: n - o, :] = active[o:, :]
                else:
                    shifted[-o:, :] = active[: n + o, :]
            ok &= shifted
        if not ok.any():
            continue
        iy, ix = np.nonzero(ok)
        for o, c in zip(offsets, coeffs):
            rows.append(idx[iy, ix])
            if axis == 1:
                cols.append(idx[iy, ix + o])
            else:
                cols.append(idx[iy + o, ix])
            vals.append(np.full(iy.size, c * scale))
        unused &= ~ok
    if rows:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=int)
        v = np.zeros(0)
    return sp.csr_matrix((v, (r, c)), shape=(n * n, n * n))


@lru_cache(maxsize=16)
def make_grid(n: int) -> Grid:
    """Build (and cache) the masked disk grid with ``n`` nodes per axis."""
    if n < 5:
        raise GridSizeError(f"grid needs at least 5 nodes per axis, got n={n}")
    if n % 2 == 0:
        raise GridSizeError(f"grid.n must be odd, got n={n}")
    h = 2.0 / (n - 1)
    c = np.linspace(-1.0, 1.0, n)
    x, y = np.meshgrid(c, c)
    fraction = _cell_fractions(n, h)
    mask = _classify(fraction)
    active = mask != EXTERIOR
    weights = np.where(active, h * h * fraction, 0.0)
    dx = _line_operator(active, _FIRST, axis=1, scale=1.0 / h)
    dy = _line_operator(active, _FIRST, axis=0, scale=1.0 / h)
    dxx = _line_operator(active, _SECOND, axis=1, scale=1.0 / h**2)
    dyy = _line_operator(active, _SECOND, axis=0, scale=1.0 / h**2)
    dxy = (dx @ dy).tocsr()
    for arr in (x, y, mask, weights):
        arr.setflags(write=False)
    return Grid(n=n, h=h, x=x, y=y, mask=mask, weights=weights,
                dx=dx, dy=dy, dxx=dxx, dyy=dyy, dxy=dxy)


def _apply(grid: Grid, op: sp.csr_matrix, u: np.ndarray) -> np.ndarray:
    u = np.where(grid.active, u, 0.0)
    return np.where(grid.active, (op @ u.ravel()).reshape(grid.shape), 0.0)


def hessian(grid: Grid, u: np.ndarray) -> SymMat:
    """Finite-difference Hessian; exterior nodes are zero."""
    return SymMat(_apply(grid, grid.dxx, u), _apply(grid, grid.dxy, u), _apply(grid, grid.dyy, u))


def gradient(grid: Grid, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return _apply(grid, grid.dx, u), _apply(grid, grid.dy, u)


def divergence(grid: Grid, vx: np.ndarray, vy: np.ndarray) -> np.ndarray:
    return _apply(grid, grid.dx, vx) + _apply(grid, grid.dy, vy)


def hessian_adjoint(grid: Grid, w: SymMat) -> np.ndarray:
    """Euclidean adjoint of ``u -> sum_k weight_k <D2u_k, w_k>``.

    The result ``g`` satisfies ``sum(u * g) == integrate(<hessian(u), w>)`` for
    every ``u``; quadrature weights are folded in.
    """
    wt = grid.weights
    g = (grid.dxx.T @ (wt * w.xx).ravel()
         + 2.0 * (grid.dxy.T @ (wt * w.xy).ravel())
         + grid.dyy.T @ (wt * w.yy).ravel())
    return np.where(grid.active, g.reshape(grid.shape), 0.0)


def hessian_transpose(grid: Grid, w: SymMat) -> np.ndarray:
    """Adjoint of :func:`hessian` in the quadrature inner product."""
    g = hessian_adjoint(grid, w)
    wt = grid.weights
    return np.divide(g, wt, out=np.zeros_like(g), where=wt > 0)


def integrate(grid: Grid, f) -> float:
    f = np.broadcast_to(np.asarray(f, dtype=float), grid.shape)
    return float(np.sum(grid.weights[grid.active] * f[grid.active]))
