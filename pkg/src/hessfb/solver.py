"""
Projected descent for the discrete free-boundary energy.

Each step moves along the energy gradient measured in a fixed discrete H^2
metric (the Gram matrix of the Hessian stencils on the free nodes), then
backtracks until the Armijo condition holds on the projected path. Boundary
band nodes stay pinned to the Dirichlet data; with ``enforce_nonneg`` iterates
are clipped at zero. The Heaviside width is driven through a decreasing
continuation schedule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import EnergyBreakdown, EnergyParams, energy, energy_gradient
from .grid import Grid

logger = logging.getLogger(__name__)

BUILTINS = ("bump", "ring", "asym")


class StagnationError(RuntimeError):
    """Line search found no decreasing step; carries the last iterate."""

    def __init__(self, msg: str, u: np.ndarray, stage: int, iteration: int):
        super().__init__(msg)
        self.u = u
        self.stage = stage
        self.iteration = iteration


@dataclass(frozen=True)
class SolveConfig:
    max_iters: int = 5000
    grad_tol: float = 1e-6
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    initial_step: float = 1.0
    max_backtracks: int = 60
    delta_schedule: tuple[float, ...] = (1e-1, 1e-2, 1e-3)
    enforce_nonneg: bool = True
    seed: int = 0
    jacobi_tol: float = 1e-10
    jacobi_max_sweeps: int = 200_000
    memory: int = 10

    def __post_init__(self):
        if self.memory < 0:
            raise ValueError("solver.memory must be >= 0")
        if self.max_iters < 1:
            raise ValueError("solver.max_iters must be >= 1")
        if not self.grad_tol > 0:
            raise ValueError("solver.grad_tol must be > 0")
        if not (0 < self.armijo_c < 1 and 0 < self.backtrack < 1 and self.initial_step > 0):
            raise ValueError("solver.armijo parameters out of range")
        sched = tuple(self.delta_schedule)
        if not sched or any(d <= 0 for d in sched):
            raise ValueError("energy.delta_schedule must be a nonempty list of positive widths")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("energy.delta_schedule must be strictly decreasing")


@dataclass
class BoundaryData:
    g: np.ndarray
    source: str

    def validate(self, grid: Grid) -> None:
        band = self.g[grid.band]
        if not np.all(np.isfinite(band)):
            raise ValueError("boundary data must be finite on the band")
        if band.min() < 0.0:
            raise ValueError("boundary data must be non-negative on the band")
        if not np.any(band > 0.0):
            raise ValueError("boundary data must not vanish identically on the band")


@dataclass
class MinimizeResult:
    u_star: np.ndarray
    history: list[EnergyBreakdown]
    history_stage: list[int]
    iterations: list[int]
    stage_converged: list[bool]
    grad_norm: float
    deltas: list[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return bool(self.stage_converged and self.stage_converged[-1])

    def to_json(self) -> dict:
        return {
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "stage_converged": self.stage_converged,
            "deltas": self.deltas,
            "history": [dict(stage=s, **e.to_json())
                        for s, e in zip(self.history_stage, self.history)],
        }


def _smoothstep5(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def builtin_boundary(grid: Grid, name: str) -> BoundaryData:
    if name == "bump":
        g = grid.field(lambda x, y: 0.05 + 0.45 * _smoothstep5((x + 0.5) / 0.5))
    elif name == "ring":
        g = grid.field(lambda x, y: np.full_like(x, 0.3))
    elif name == "asym":
        g = grid.field(lambda x, y: 0.4 * (1.0 + x) / 2.0)
    else:
        raise ValueError(f"unknown builtin boundary {name!r}; choose from {BUILTINS}")
    return BoundaryData(g=g, source=f"builtin:{name}")


def harmonic_extension(grid: Grid, g: np.ndarray, tol: float = 1e-10,
                       max_sweeps: int = 200_000) -> np.ndarray:
    """Jacobi sweeps for the 5-point Laplace equation with band values fixed."""
    interior = grid.interior
    u = np.where(grid.band, g, 0.0)
    if interior.any():
        u[interior] = g[grid.band].mean()
    for _ in range(max_sweeps):
        avg = 0.25 * (np.roll(u, 1, 0) + np.roll(u, -1, 0) + np.roll(u, 1, 1) + np.roll(u, -1, 1))
        change = np.max(np.abs(avg[interior] - u[interior]), initial=0.0)
        u[interior] = avg[interior]
        if change < tol:
            break
    return u


@lru_cache(maxsize=16)
def _metric_factor(grid: Grid):
    free = np.flatnonzero(grid.interior.ravel())
    w = sp.diags(grid.weights.ravel())
    gram = (grid.dxx.T @ w @ grid.dxx + 2.0 * grid.dxy.T @ w @ grid.dxy
            + grid.dyy.T @ w @ grid.dyy)
    gram = gram.tocsr()[free][:, free].tocsc()
    return free, spla.splu(gram)


def _project(grid: Grid, u: np.ndarray, g: np.ndarray, nonneg: bool) -> np.ndarray:
    u = np.where(grid.band, g, u)
    if nonneg:
        u = np.where(grid.interior, np.maximum(u, 0.0), u)
    return np.where(grid.active, u, 0.0)


def projected_gradient(grid: Grid, u: np.ndarray, grad: np.ndarray, nonneg: bool) -> np.ndarray:
    pg = np.where(grid.interior, grad, 0.0)
    if nonneg:
        pg[(u <= 0.0) & (grad > 0.0)] = 0.0
    return pg


def _two_loop(pg_free, pairs, lu):
    """Limited-memory inverse-metric product seeded with the H^2 metric."""
    q = pg_free.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    r = lu.solve(q)
    if pairs:
        s, y, _ = pairs[-1]
        py = lu.solve(y)
        r *= np.dot(s, y) / np.dot(y, py)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * np.dot(y, r)
        r += (a - b) * s
    return r


def _descent_stage(grid, u, g, params, cfg, nonneg, stage, history, history_stage):
    free, lu = _metric_factor(grid)
    e = energy(grid, u, params)
    pairs: list[tuple[np.ndarray, np.ndarray, float]] = []
    pg_norm = np.inf
    it = 0
    grad = energy_gradient(grid, u, params)
    for it in range(cfg.max_iters + 1):
        pg = projected_gradient(grid, u, grad, nonneg)
        pg_norm = float(np.max(np.abs(pg)))
        if pg_norm <= cfg.grad_tol:
            return u, it, True, pg_norm
        if it == cfg.max_iters:
            break
        blocked = (u <= 0.0) & (grad > 0.0) if nonneg else np.zeros(grid.shape, bool)
        pg_free = pg.ravel()[free]
        candidates = []
        if pairs:
            d = np.zeros(grid.n * grid.n)
            d[free] = -_two_loop(pg_free, pairs, lu)
            d = d.reshape(grid.shape)
            d[blocked] = 0.0
            if np.sum(d * pg) < 0.0:
                candidates.append(d)
        d = np.zeros(grid.n * grid.n)
        d[free] = -lu.solve(pg_free)
        d = d.reshape(grid.shape)
        d[blocked] = 0.0
        candidates += [d, -pg]
        accepted = None
        for direction in candidates:
            step = cfg.initial_step
            for _ in range(cfg.max_backtracks + 1):
                trial = _project(grid, u + step * direction, g, nonneg)
                e_trial = energy(grid, trial, params)
                decrease = cfg.armijo_c * float(np.sum(grad * (trial - u)))
                if e_trial.total <= e.total + decrease and e_trial.total <= e.total:
                    accepted = (trial, e_trial)
                    break
                step *= cfg.backtrack
            if accepted is not None:
                break
            pairs.clear()
        if accepted is None:
            raise StagnationError(
                f"no decreasing step after {cfg.max_backtracks} backtracks "
                f"(stage {stage}, iteration {it}, |pg| = {pg_norm:.3e})", u, stage, it)
        trial, e_trial = accepted
        new_grad = energy_gradient(grid, trial, params)
        s_vec = (trial - u).ravel()[free]
        y_vec = (new_grad - grad).ravel()[free]
        sy = float(np.dot(s_vec, y_vec))
        if sy > 1e-10 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            pairs.append((s_vec, y_vec, 1.0 / sy))
            if len(pairs) > cfg.memory:
                pairs.pop(0)
        u, e, grad = trial, e_trial, new_grad
        history.append(e)
        history_stage.append(stage)
    return u, it, False, pg_norm


def minimize(grid: Grid, boundary: BoundaryData, params: EnergyParams,
             cfg: SolveConfig = SolveConfig(), u0: np.ndarray | None = None,
             deltas: tuple[float, ...] | None = None, nonneg: bool | None = None
             ) -> MinimizeResult:
    """Minimize the smooth-mode energy over fields pinned to ``boundary`` on the band."""
    boundary.validate(grid)
    nonneg = cfg.enforce_nonneg if nonneg is None else nonneg
    g = boundary.g
    if u0 is None:
        u = harmonic_extension(grid, g, cfg.jacobi_tol, cfg.jacobi_max_sweeps)
    else:
        u = np.array(u0, dtype=float)
    u = _project(grid, u, g, nonneg)
    deltas = tuple(cfg.delta_schedule) if deltas is None else deltas
    history: list[EnergyBreakdown] = []
    history_stage: list[int] = []
    iterations, stage_ok = [], []
    pg_norm = np.inf
    for stage, delta in enumerate(deltas):
        stage_params = params.with_(delta=delta)
        u, its, ok, pg_norm = _descent_stage(grid, u, g, stage_params, cfg, nonneg,
                                             stage, history, history_stage)
        logger.info("stage %d (delta=%g): %d iterations, |pg|=%.3e, converged=%s",
                    stage, delta, its, pg_norm, ok)
        iterations.append(its)
        stage_ok.append(ok)
    return MinimizeResult(u_star=u, history=history, history_stage=history_stage,
                          iterations=iterations, stage_converged=stage_ok,
                          grad_norm=pg_norm, deltas=list(deltas))


def minimize_unpenalized(grid: Grid, boundary: BoundaryData, params: EnergyParams,
                         cfg: SolveConfig = SolveConfig(), u0: np.ndarray | None = None
                         ) -> MinimizeResult:
    """Minimize the Hessian term alone (Lambda = 0), without the sign constraint."""
    unpen = params.with_(Lambda=0.0, delta=cfg.delta_schedule[-1])
    return minimize(grid, boundary, unpen, cfg, u0=u0,
                    deltas=(cfg.delta_schedule[-1],), nonneg=False)
