"""Elliptic operators F on symmetric 2x2 matrices, their derivatives, and axiom samplers."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .grid import SymMat

VARIANTS = ("smoothed-frobenius", "scaled-frobenius", "linear-trace")
AXIOMS = ("A1", "A2", "A3")


class SingularOperatorError(ValueError):
    """Derivative requested at the kink of an unsmoothed norm."""


@dataclass(frozen=True)
class OperatorSpec:
    variant: str = "smoothed-frobenius"
    lam: float = 1.0
    eta: float = 1e-3

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"operator.variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.lam >= 1.0:
            raise ValueError(f"operator.lambda must be >= 1, got {self.lam}")
        if not self.eta >= 0.0:
            raise ValueError(f"operator.eta must be >= 0, got {self.eta}")

    @property
    def coefficient(self) -> float:
        """Multiplier c of the norm; the scaled variant uses c = lambda."""
        return self.lam if self.variant == "scaled-frobenius" else 1.0

    @property
    def a3_compliant(self) -> bool:
        return self.variant != "linear-trace"

    def to_json(self) -> dict:
        d = asdict(self)
        return {"variant": d["variant"], "lambda": d["lam"], "eta": d["eta"]}

    @classmethod
    def from_json(cls, d: dict) -> "OperatorSpec":
        return cls(variant=d.get("variant", "smoothed-frobenius"),
                   lam=float(d.get("lambda", 1.0)), eta=float(d.get("eta", 1e-3)))


def as_symmat(m) -> SymMat:
    """Accept a SymMat or a (..., 2, 2) array and return a SymMat."""
    if isinstance(m, SymMat):
        return m
    m = np.asarray(m, dtype=float)
    return SymMat(m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1])


def _smoothed_norm(m: SymMat, eta: float) -> np.ndarray:
    sq = m.inner(m)
    if eta == 0.0:
        return np.sqrt(sq)
    # sqrt(s + eta^2) - eta, written to avoid cancellation for small s
    return sq / (np.sqrt(sq + eta * eta) + eta)


def f_eval(spec: OperatorSpec, m) -> np.ndarray:
    m = as_symmat(m)
    if spec.variant == "linear-trace":
        return m.xx + m.yy
    return spec.coefficient * _smoothed_norm(m, spec.eta)


def f_grad(spec: OperatorSpec, m) -> SymMat:
    """Partials dF/dm_ij, arranged as a symmetric matrix field."""
    m = as_symmat(m)
    if spec.variant == "linear-trace":
        one = np.ones_like(np.asarray(m.xx, dtype=float))
        return SymMat(one, 0.0 * one, one)
    denom = np.sqrt(m.inner(m) + spec.eta**2)
    if np.any(denom == 0.0):
        raise SingularOperatorError(
            "F is not differentiable at M = 0 with eta = 0; use eta > 0")
    return m.scale(spec.coefficient / denom)


@dataclass
class AxiomReport:
    axiom: str
    trials: int
    pass_rate: float
    worst_violation: float
    worst_case: dict | None

    def to_json(self) -> dict:
        return asdict(self)


def _random_sym(rng: np.random.Generator, k: int) -> SymMat:
    scale = 10.0 ** rng.uniform(-3.0, 3.0, size=k)
    e = rng.uniform(-1.0, 1.0, size=(3, k)) * scale
    return SymMat(e[0], e[1], e[2])


def _random_psd(rng: np.random.Generator, k: int) -> SymMat:
    scale = 10.0 ** rng.uniform(-3.0, 3.0, size=k)
    a = rng.uniform(-1.0, 1.0, size=(k, 2, 2)) * scale[:, None, None]
    return as_symmat(np.einsum("kji,kjl->kil", a, a))


def axiom_sampler(spec: OperatorSpec, which: str, trials: int = 10_000,
                  seed: int = 0) -> AxiomReport:
    """Sample random symmetric matrices and test one of A1 (ellipticity),
    A2 (midpoint convexity) or A3 (two-sided growth).

    Violations are measured as the amount by which an inequality fails,
    relative to the magnitude of the quantities compared. The smoothed
    operator is allowed an additive slack of ``eta`` on A3.
    """
    if which not in AXIOMS:
        raise ValueError(f"unknown axiom {which!r}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    lam = spec.lam
    m = _random_sym(rng, trials)
    if which == "A1":
        nmat = _random_psd(rng, trials)
        diff = f_eval(spec, m + nmat) - f_eval(spec, m)
        nn = nmat.frobenius()
        size = np.abs(f_eval(spec, m + nmat)) + np.abs(f_eval(spec, m)) + nn
        viol = np.maximum(nn / lam - diff, diff - lam * nn)
    elif which == "A2":
        nmat = _random_sym(rng, trials)
        mid = f_eval(spec, (m + nmat).scale(0.5))
        avg = 0.5 * (f_eval(spec, m) + f_eval(spec, nmat))
        size = np.abs(mid) + np.abs(avg)
        viol = mid - avg
    else:
        nmat = None
        val = f_eval(spec, m)
        nm = m.frobenius()
        slack = spec.eta if spec.variant == "smoothed-frobenius" else 0.0
        size = np.abs(val) + nm
        viol = np.maximum(nm / lam - slack - val, val - lam * nm - slack)
    viol = viol - 1e-12 * size
    bad = viol > 0.0
    worst = int(np.argmax(viol))
    worst_case = None
    if bad[worst]:
        worst_case = {"M": [float(m.xx[worst]), float(m.xy[worst]), float(m.yy[worst])]}
        if nmat is not None:
            worst_case["N"] = [float(nmat.xx[worst]), float(nmat.xy[worst]), float(nmat.yy[worst])]
    return AxiomReport(axiom=which, trials=trials, pass_rate=float(1.0 - bad.mean()),
                       worst_violation=float(max(viol[worst], 0.0)), worst_case=worst_case)
