"""
Penalty sweep Lambda_n -> 0 and the finite certificates of Gamma-convergence.

The sweep minimizes G_{Lambda_n,p} = int F(D2u)^p + Lambda_n |{u > 0}| along a
strictly decreasing schedule, warm-starting each solve from the previous
minimizer, and compares every record against the minimizer u0 of the
unpenalized energy G_{0,p}. The report checks only what a finite set of
sequences can show; a passing report is consistent with Gamma-convergence,
it does not prove it.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyBreakdown, EnergyParams, energy, smoothed_measure
from .grid import Grid, gradient, hessian, integrate
from .solver import BoundaryData, MinimizeResult, SolveConfig, minimize, minimize_unpenalized

logger = logging.getLogger(__name__)


class SweepError(RuntimeError):
    """A solve failed mid-sweep; ``records`` holds everything finished before it."""

    def __init__(self, msg: str, records: list, u0: np.ndarray | None):
        super().__init__(msg)
        self.records = records
        self.u0 = u0


def discrete_sobolev_norm(grid: Grid, u: np.ndarray, order: int, p: float) -> float:
    """Discrete W^{1,p} (order 1) or W^{2,p} (order 2) norm over the active nodes."""
    if not p > 1.0:
        raise ValueError("p must be > 1")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    u = np.where(grid.active, u, 0.0)
    ux, uy = gradient(grid, u)
    dens = np.abs(u) ** p + np.hypot(ux, uy) ** p
    if order == 2:
        dens = dens + hessian(grid, u).frobenius() ** p
    return integrate(grid, dens) ** (1.0 / p)


@dataclass
class SweepRecord:
    Lambda: float
    u: np.ndarray
    G_lambda: EnergyBreakdown      # G_{Lambda_n}[u_n]
    G_zero: float                  # G_0[u_n]
    G_lambda_u0: EnergyBreakdown   # G_{Lambda_n}[u0], the constant recovery sequence
    w1p: float
    w2p: float
    dist_to_u0: float
    sharp_measure_u0: float
    iterations: list[int] = field(default_factory=list)
    converged: bool = True

    def to_json(self) -> dict:
        return {
            "Lambda": self.Lambda,
            "G_lambda": self.G_lambda.to_json(),
            "G_zero": self.G_zero,
            "G_lambda_u0": self.G_lambda_u0.to_json(),
            "w1p": self.w1p,
            "w2p": self.w2p,
            "dist_to_u0": self.dist_to_u0,
            "sharp_measure_u0": self.sharp_measure_u0,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass
class SweepResult:
    u0: np.ndarray
    G0_u0: float
    w1p_u0: float
    records: list[SweepRecord]
    u0_result: MinimizeResult


def _validate_schedule(schedule) -> tuple[float, ...]:
    sched = tuple(float(x) for x in schedule)
    if any(not x > 0.0 for x in sched):
        raise ValueError("sweep schedule entries must be > 0")
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError("sweep schedule must be strictly decreasing")
    if sched and sched[-1] >= 1e-3:
        logger.warning("sweep schedule ends at Lambda=%g, not below 1e-3; "
                       "the small-penalty regime is only partly probed", sched[-1])
    return sched


def _record(grid, lam, res: MinimizeResult, u0, params0, p) -> SweepRecord:
    u = res.u_star
    pl = params0.with_(Lambda=lam)
    return SweepRecord(
        Lambda=lam,
        u=u,
        G_lambda=energy(grid, u, pl),
        G_zero=energy(grid, u, params0).total,
        G_lambda_u0=energy(grid, u0, pl),
        w1p=discrete_sobolev_norm(grid, u, 1, p),
        w2p=discrete_sobolev_norm(grid, u, 2, p),
        dist_to_u0=discrete_sobolev_norm(grid, u - u0, 1, p),
        sharp_measure_u0=smoothed_measure(grid, u0, params0.delta, "sharp"),
        iterations=list(res.iterations),
        converged=res.converged,
    )


def run_sweep(grid: Grid, boundary: BoundaryData, params: EnergyParams, schedule,
              cfg: SolveConfig = SolveConfig(), warm_start: bool = True,
              workers: int = 1) -> SweepResult:
    """Minimize G_{Lambda,p} for each Lambda in ``schedule`` and compare with u0.

    Energies are evaluated in smooth mode at the final Heaviside width of
    ``cfg.delta_schedule``. With ``warm_start`` each solve after the first
    starts from the previous minimizer and runs only the final width, so the
    sweep is sequential; otherwise every Lambda is a cold solve with the full
    continuation and ``workers`` threads may run them concurrently.
    """
    sched = _validate_schedule(schedule)
    if params.operator.variant != "smoothed-frobenius":
        logger.warning("sweep run with operator %s; only smoothed-frobenius is the studied case",
                       params.operator.variant)
    delta = cfg.delta_schedule[-1]
    params0 = params.with_(Lambda=0.0, delta=delta)
    try:
        res0 = minimize_unpenalized(grid, boundary, params, cfg)
    except Exception as exc:
        raise SweepError(f"unpenalized solve failed: {exc}", [], None) from exc
    u0 = res0.u_star
    records: list[SweepRecord] = []

    def solve(lam, u_start, deltas):
        return minimize(grid, boundary, params.with_(Lambda=lam), cfg, u0=u_start, deltas=deltas)

    if warm_start:
        u_prev = None
        for lam in sched:
            deltas = None if u_prev is None else (delta,)
            try:
                res = solve(lam, u_prev, deltas)
            except Exception as exc:
                raise SweepError(f"solve at Lambda={lam} failed: {exc}", records, u0) from exc
            records.append(_record(grid, lam, res, u0, params0, params.p))
            logger.info("Lambda=%g: G=%.6g dist=%.3e", lam, records[-1].G_lambda.total,
                        records[-1].dist_to_u0)
            u_prev = res.u_star
    else:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            futures = [pool.submit(solve, lam, None, None) for lam in sched]
            for lam, fut in zip(sched, futures):
                try:
                    res = fut.result()
                except Exception as exc:
                    raise SweepError(f"solve at Lambda={lam} failed: {exc}", records, u0) from exc
                records.append(_record(grid, lam, res, u0, params0, params.p))
    return SweepResult(u0=u0, G0_u0=energy(grid, u0, params0).total,
                       w1p_u0=discrete_sobolev_norm(grid, u0, 1, params.p),
                       records=records, u0_result=res0)


@dataclass
class GammaCheck:
    name: str
    passed: bool
    detail: str

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class GammaReport:
    checks: list[GammaCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> GammaCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {"passed": self.passed, "verdict": ("consistent with Gamma-convergence"
                                                   if self.passed else "inconsistent"),
                "checks": [c.to_json() for c in self.checks]}


def gamma_report(sweep: SweepResult, liminf_tol: float = 1e-4,
                 recovery_rtol: float = 1e-3) -> GammaReport:
    recs = sweep.records
    if len(recs) < 3:
        raise ValueError(f"gamma_report needs at least 3 records, got {len(recs)}")
    checks = []

    g = [r.G_lambda.total for r in recs]
    bad = [recs[i + 1].Lambda for i in range(len(g) - 1) if g[i + 1] > g[i]]
    checks.append(GammaCheck("energy_monotone", not bad,
                             "G_Lambda[u_Lambda] non-increasing" if not bad
                             else f"energy increases at Lambda={bad}"))

    gmin = min(g)
    checks.append(GammaCheck("liminf", sweep.G0_u0 <= gmin + liminf_tol,
                             f"G0[u0]={sweep.G0_u0:.10g}, min G_Lambda[u_Lambda]={gmin:.10g}"))

    worst = 0.0
    bad = []
    for r in recs:
        gap = r.G_lambda_u0.total - sweep.G0_u0
        target = r.Lambda * r.sharp_measure_u0
        err = abs(gap - target)
        tol = recovery_rtol * r.Lambda * np.pi
        worst = max(worst, err / (r.Lambda * np.pi))
        if err > tol:
            bad.append(r.Lambda)
    checks.append(GammaCheck("recovery", not bad,
                             f"worst |gap - Lambda*|{{u0>0}}|| / (Lambda*pi) = {worst:.3e}"
                             + (f"; fails at Lambda={bad}" if bad else "")))

    d = [r.dist_to_u0 for r in recs]
    tail = d[-4:]
    tail_ok = all(b <= a for a, b in zip(tail, tail[1:]))
    ok = d[-1] < d[0] and tail_ok and d[-1] < 0.1 * sweep.w1p_u0
    checks.append(GammaCheck("minimizer_convergence", ok,
                             f"dist first={d[0]:.4e} last={d[-1]:.4e} "
                             f"0.1*|u0|={0.1 * sweep.w1p_u0:.4e} tail non-increasing={tail_ok}"))

    w2 = np.array([r.w2p for r in recs])
    cap = 2.0 * float(np.median(w2))
    bad = [r.Lambda for r in recs if r.w2p > cap]
    checks.append(GammaCheck("equicoercivity", not bad,
                             f"max W2p={w2.max():.4e}, 2*median={cap:.4e}"
                             + (f"; blow-up at Lambda={bad}" if bad else "")))
    return GammaReport(checks)
