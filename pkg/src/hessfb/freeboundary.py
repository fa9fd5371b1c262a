"""
Level sets of the minimizer and free-boundary diagnostics.

Level curves come from marching squares over cells whose four corners are
non-exterior; saddle cells are split according to the sign of the cell-average
value. Segment endpoints lie on cell edges, found by linear interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import EnergyParams, dirichlet_density
from .grid import Grid, gradient, hessian, integrate
from .operators import f_eval, f_grad


class NoBoundaryError(ValueError):
    pass


@dataclass
class BoundaryCurve:
    segments: np.ndarray  # (k, 2, 2): segment, endpoint, (x, y)
    level: float

    @property
    def length(self) -> float:
        if len(self.segments) == 0:
            return 0.0
        d = self.segments[:, 1, :] - self.segments[:, 0, :]
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.segments[:, 0, :] + self.segments[:, 1, :])

    def __len__(self):
        return len(self.segments)


# Edges: 0 bottom (c0-c1), 1 right (c1-c2), 2 top (c3-c2), 3 left (c0-c3)
# with corners c0=(i,j), c1=(i,j+1), c2=(i+1,j+1), c3=(i+1,j).
_EDGES = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
    6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)], 9: [(0, 2)],
    11: [(1, 2)], 12: [(1, 3)], 13: [(0, 1)], 14: [(3, 0)],
}
# Saddles: 5 = c0,c2 positive; 10 = c1,c3 positive.
_SADDLE_SEPARATE = {5: [(3, 0), (1, 2)], 10: [(0, 1), (2, 3)]}
_SADDLE_JOINED = {5: [(0, 1), (2, 3)], 10: [(3, 0), (1, 2)]}


def level_perimeter(grid: Grid, u: np.ndarray, t: float) -> BoundaryCurve:
    """Marching-squares approximation of the boundary of {u > t}."""
    v = np.asarray(u, dtype=float) - t
    a = grid.active
    cell_ok = a[:-1, :-1] & a[:-1, 1:] & a[1:, 1:] & a[1:, :-1]
    c = [v[:-1, :-1], v[:-1, 1:], v[1:, 1:], v[1:, :-1]]
    pos = [ci > 0.0 for ci in c]
    case = pos[0] * 1 + pos[1] * 2 + pos[2] * 4 + pos[3] * 8
    case = np.where(cell_ok, case, 0)
    xs, ys = grid.x, grid.y
    h = grid.h

    def edge_point(edge, iy, ix):
        v0, v1, v2, v3 = (ci[iy, ix] for ci in c)
        x0, y0 = xs[iy, ix], ys[iy, ix]
        pairs = {0: (v0, v1, (x0, y0), (x0 + h, y0)),
                 1: (v1, v2, (x0 + h, y0), (x0 + h, y0 + h)),
                 2: (v3, v2, (x0, y0 + h), (x0 + h, y0 + h)),
                 3: (v0, v3, (x0, y0), (x0, y0 + h))}
        va, vb, pa, pb = pairs[edge]
        s = va / (va - vb)
        return np.stack([pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])], axis=-1)

    segs = []
    for code, edges in _EDGES.items():
        iy, ix = np.nonzero(case == code)
        for e0, e1 in edges:
            if iy.size:
                segs.append(np.stack([edge_point(e0, iy, ix), edge_point(e1, iy, ix)], axis=1))
    center = 0.25 * (c[0] + c[1] + c[2] + c[3])
    for code in (5, 10):
        for joined in (False, True):
            sel = (case == code) & ((center > 0.0) == joined)
            iy, ix = np.nonzero(sel)
            if not iy.size:
                continue
            table = _SADDLE_JOINED if joined else _SADDLE_SEPARATE
            for e0, e1 in table[code]:
                segs.append(np.stack([edge_point(e0, iy, ix), edge_point(e1, iy, ix)], axis=1))
    segments = np.concatenate(segs) if segs else np.zeros((0, 2, 2))
    return BoundaryCurve(segments=segments, level=float(t))


@dataclass
class CoareaEstimate:
    integral: float
    constant: float
    levels: list[float]
    lengths: list[float]


def coarea_scan(grid: Grid, u: np.ndarray, eps: float, samples: int = 10) -> CoareaEstimate:
    """Midpoint rule for the integral over t in (0, eps) of the level-set perimeter."""
    if not eps > 0.0:
        raise ValueError("eps must be > 0")
    if samples < 2:
        raise ValueError("samples must be >= 2")
    dt = eps / samples
    levels = [(k + 0.5) * dt for k in range(samples)]
    lengths = [level_perimeter(grid, u, t).length for t in levels]
    total = float(sum(lengths) * dt)
    return CoareaEstimate(integral=total, constant=total / eps, levels=levels, lengths=lengths)


def slab_energy(grid: Grid, u: np.ndarray, params: EnergyParams, eps: float) -> float:
    if not eps > 0.0:
        raise ValueError("eps must be > 0")
    slab = (u >= 0.0) & (u <= eps)
    return integrate(grid, np.where(slab, dirichlet_density(grid, u, params), 0.0))


def bilinear(grid: Grid, field: np.ndarray, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(points)
    fx = (pts[:, 0] + 1.0) / grid.h
    fy = (pts[:, 1] + 1.0) / grid.h
    ix = np.clip(np.floor(fx).astype(int), 0, grid.n - 2)
    iy = np.clip(np.floor(fy).astype(int), 0, grid.n - 2)
    sx, sy = fx - ix, fy - iy
    return ((1 - sx) * (1 - sy) * field[iy, ix] + sx * (1 - sy) * field[iy, ix + 1]
            + (1 - sx) * sy * field[iy + 1, ix] + sx * sy * field[iy + 1, ix + 1])


def condition_fields(grid: Grid, u: np.ndarray, params: EnergyParams):
    """Nodal statement-form and proof-form free-boundary expressions."""
    p, lam = params.p, params.Lambda
    hess = hessian(grid, u)
    fval = f_eval(params.operator, hess)
    fpow = np.where(grid.active, np.abs(fval) ** (p - 1.0), 0.0)
    a = f_grad(params.operator, hess)
    b = a.scale(fpow)
    ux, uy = gradient(grid, u)

    def row_div(m):
        # (d/dx_i) m_ij for j = x, y
        dxx, _ = gradient(grid, m.xx)
        _, dyx = gradient(grid, m.xy)
        dxy, _ = gradient(grid, m.xy)
        _, dyy = gradient(grid, m.yy)
        return dxx + dyx, dxy + dyy

    ax, ay = row_div(a)
    bx, by = row_div(b)
    statement = fpow * (ax * ux + ay * uy) - lam / (2.0 * p)
    proof = 2.0 * p * (bx * ux + by * uy) + lam
    return statement, proof


@dataclass
class ConditionReport:
    points: np.ndarray
    statement_form: np.ndarray
    proof_form: np.ndarray
    level: float

    def summary(self, p: float, lam: float) -> dict:
        s, q = self.statement_form, self.proof_form
        return {
            "level": self.level,
            "count": int(len(s)),
            "statement_mean": float(np.mean(s)),
            "statement_sup": float(np.max(np.abs(s))),
            "proof_mean": float(np.mean(q)),
            "proof_sup": float(np.max(np.abs(q))),
            # relation logged for the statement/proof mismatch; not asserted
            "relation_gap_mean": float(np.mean(s - (-q / (2.0 * p) - lam / p))),
        }

    def to_json(self, p: float, lam: float) -> dict:
        return {
            "summary": self.summary(p, lam),
            "samples": [
                {"point": [float(x), float(y)], "statement_form": float(a), "proof_form": float(b)}
                for (x, y), a, b in zip(self.points, self.statement_form, self.proof_form)
            ],
        }


def fb_condition_residual(grid: Grid, u: np.ndarray, params: EnergyParams,
                          tau: float) -> ConditionReport:
    curve = level_perimeter(grid, u, tau)
    if len(curve) == 0:
        raise NoBoundaryError(f"no level curve of u at t={tau}")
    statement, proof = condition_fields(grid, u, params)
    pts = curve.midpoints
    return ConditionReport(points=pts, statement_form=bilinear(grid, statement, pts),
                           proof_form=bilinear(grid, proof, pts), level=tau)
