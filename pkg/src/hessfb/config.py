"""
Run configuration: JSON file plus dot-path overrides, validated up front.

Every key has a default; unknown keys are rejected. Validation errors name the
offending field and, when it came from the file, the line it sits on.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .energy import EnergyParams
from .grid import Grid, make_grid
from .operators import VARIANTS, OperatorSpec
from .solver import BUILTINS, BoundaryData, SolveConfig, builtin_boundary

DEFAULTS: dict[str, Any] = {
    "grid": {"n": 33},
    "operator": {"variant": "smoothed-frobenius", "lambda": 1.0, "eta": 1e-3},
    "energy": {"p": 2.0, "Lambda": 1.0, "delta_schedule": [1e-1, 1e-2, 1e-3]},
    "solver": {
        "max_iters": 5000,
        "grad_tol": 1e-6,
        "armijo": {"c": 1e-4, "backtrack": 0.5, "initial_step": 1.0, "max_backtracks": 60},
        "enforce_nonneg": True,
        "seed": 0,
        "memory": 10,
    },
    "boundary": {"builtin": "bump", "csv": None},
    "sweep": {"schedule": [2.0**-k for k in range(9)], "warm_start": True, "workers": 1},
    "mfg": {"tau": None, "bumps": 10, "seed": 0, "radius": [0.1, 0.25]},
    "fb": {"tau": None, "eps": [0.05, 0.1], "samples": 10, "levels": [0.0]},
    "firstvar": {"count": 5, "seed": 0, "t_step": 1e-3, "power": 6, "tau": None},
    "selftest": {"n": 33, "extended_n": 65},
}


class ConfigError(ValueError):
    def __init__(self, field: str, msg: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field}: {msg}{where}")
        self.field = field
        self.line = line


def _locate(text: str | None, path: str) -> int | None:
    """Best-effort line number of a dot-path key in the JSON source."""
    if not text:
        return None
    pos = 0
    for key in path.split("."):
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            return None
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def _merge(base: dict, user: dict, text: str | None, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in user.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(path, "unknown key", _locate(text, path))
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(path, "expected an object", _locate(text, path))
            out[key] = _merge(base[key], val, text, path + ".")
        else:
            out[key] = val
    return out


def _parse_override(item: str) -> tuple[list[str], Any]:
    if "=" not in item:
        raise ConfigError(item, "override must look like key.path=value")
    key, raw = item.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    return key.strip().split("."), val


def _apply_override(cfg: dict, keys: list[str], val: Any) -> None:
    node = cfg
    for i, k in enumerate(keys):
        path = ".".join(keys[: i + 1])
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(path, "unknown key (override)")
        if i == len(keys) - 1:
            node[k] = val
        else:
            node = node[k]


@dataclass
class RunConfig:
    data: dict
    source: str | None = None

    # typed views -------------------------------------------------------
    @property
    def n(self) -> int:
        return int(self.data["grid"]["n"])

    def grid(self) -> Grid:
        return make_grid(self.n)

    def operator(self) -> OperatorSpec:
        return OperatorSpec.from_json(self.data["operator"])

    def params(self) -> EnergyParams:
        e = self.data["energy"]
        return EnergyParams(p=float(e["p"]), Lambda=float(e["Lambda"]),
                            delta=float(e["delta_schedule"][-1]), operator=self.operator())

    def solve_config(self) -> SolveConfig:
        s, a = self.data["solver"], self.data["solver"]["armijo"]
        return SolveConfig(max_iters=int(s["max_iters"]), grad_tol=float(s["grad_tol"]),
                           armijo_c=float(a["c"]), backtrack=float(a["backtrack"]),
                           initial_step=float(a["initial_step"]),
                           max_backtracks=int(a["max_backtracks"]),
                           delta_schedule=tuple(float(d) for d in self.data["energy"]["delta_schedule"]),
                           enforce_nonneg=bool(s["enforce_nonneg"]), seed=int(s["seed"]),
                           memory=int(s["memory"]))

    def boundary(self, grid: Grid) -> BoundaryData:
        b = self.data["boundary"]
        if b["csv"] is not None:
            from .fieldio import read_csv
            g = read_csv(b["csv"])
            if g.shape != grid.shape:
                raise ConfigError("boundary.csv",
                                  f"field is {g.shape[0]}x{g.shape[1]}, grid is {grid.n}x{grid.n}")
            bd = BoundaryData(g=np.where(grid.band, g, 0.0), source=f"csv:{b['csv']}")
        else:
            bd = builtin_boundary(grid, b["builtin"])
        bd.validate(grid)
        return bd

    def to_json(self) -> dict:
        return copy.deepcopy(self.data)

    def dumps(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"


def _validate(cfg: dict, text: str | None) -> None:
    def fail(path, msg):
        raise ConfigError(path, msg, _locate(text, path))

    def number(path, val, lo=None, lo_open=True, integer=False):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            fail(path, "must be a number")
        if integer and int(val) != val:
            fail(path, "must be an integer")
        if not np.isfinite(val):
            fail(path, "must be finite")
        if lo is not None and (val <= lo if lo_open else val < lo):
            fail(path, f"must be {'>' if lo_open else '>='} {lo}")

    n = cfg["grid"]["n"]
    number("grid.n", n, integer=True)
    if int(n) % 2 == 0:
        fail("grid.n", "grid.n must be odd")
    if int(n) < 17:
        fail("grid.n", "grid.n must be >= 17")

    op = cfg["operator"]
    if op["variant"] not in VARIANTS:
        fail("operator.variant", f"must be one of {list(VARIANTS)}")
    number("operator.lambda", op["lambda"], lo=1.0, lo_open=False)
    number("operator.eta", op["eta"], lo=0.0, lo_open=False)

    e = cfg["energy"]
    number("energy.p", e["p"])
    if not e["p"] > 1.0:
        fail("energy.p", "p must be > 1 (p > d/2 with d = 2)")
    number("energy.Lambda", e["Lambda"], lo=0.0, lo_open=False)
    sched = e["delta_schedule"]
    if not isinstance(sched, list) or not sched:
        fail("energy.delta_schedule", "must be a nonempty list")
    for d in sched:
        number("energy.delta_schedule", d, lo=0.0)
    if any(b >= a for a, b in zip(sched, sched[1:])):
        fail("energy.delta_schedule", "must be strictly decreasing")

    s = cfg["solver"]
    number("solver.max_iters", s["max_iters"], lo=0, integer=True)
    number("solver.grad_tol", s["grad_tol"], lo=0.0)
    number("solver.armijo.c", s["armijo"]["c"], lo=0.0)
    if not s["armijo"]["c"] < 1.0:
        fail("solver.armijo.c", "must be < 1")
    number("solver.armijo.backtrack", s["armijo"]["backtrack"], lo=0.0)
    if not s["armijo"]["backtrack"] < 1.0:
        fail("solver.armijo.backtrack", "must be < 1")
    number("solver.armijo.initial_step", s["armijo"]["initial_step"], lo=0.0)
    number("solver.armijo.max_backtracks", s["armijo"]["max_backtracks"], lo=0, integer=True)
    if not isinstance(s["enforce_nonneg"], bool):
        fail("solver.enforce_nonneg", "must be true or false")
    number("solver.seed", s["seed"], lo=0, lo_open=False, integer=True)
    number("solver.memory", s["memory"], lo=0, lo_open=False, integer=True)

    b = cfg["boundary"]
    if b["csv"] is None:
        if b["builtin"] not in BUILTINS:
            fail("boundary.builtin", f"must be one of {list(BUILTINS)}")
    elif not isinstance(b["csv"], str):
        fail("boundary.csv", "must be a path string")

    sw = cfg["sweep"]
    if not isinstance(sw["schedule"], list):
        fail("sweep.schedule", "must be a list")
    for lam in sw["schedule"]:
        number("sweep.schedule", lam, lo=0.0)
    if any(b2 >= a for a, b2 in zip(sw["schedule"], sw["schedule"][1:])):
        fail("sweep.schedule", "must be strictly decreasing")
    if not isinstance(sw["warm_start"], bool):
        fail("sweep.warm_start", "must be true or false")
    number("sweep.workers", sw["workers"], lo=0, integer=True)

    m = cfg["mfg"]
    if m["tau"] is not None:
        number("mfg.tau", m["tau"], lo=0.0)
    number("mfg.bumps", m["bumps"], lo=0, integer=True)
    number("mfg.seed", m["seed"], lo=0, lo_open=False, integer=True)
    r = m["radius"]
    if not (isinstance(r, list) and len(r) == 2 and 0 < r[0] <= r[1] < 1):
        fail("mfg.radius", "must be [rmin, rmax] with 0 < rmin <= rmax < 1")

    f = cfg["fb"]
    if f["tau"] is not None:
        number("fb.tau", f["tau"], lo=0.0)
    for eps in f["eps"]:
        number("fb.eps", eps, lo=0.0)
    number("fb.samples", f["samples"], lo=1, integer=True)
    for t in f["levels"]:
        number("fb.levels", t, lo=0.0, lo_open=False)

    v = cfg["firstvar"]
    number("firstvar.count", v["count"], lo=0, integer=True)
    number("firstvar.seed", v["seed"], lo=0, lo_open=False, integer=True)
    number("firstvar.t_step", v["t_step"], lo=0.0)
    number("firstvar.power", v["power"], lo=3, lo_open=False, integer=True)
    if v["tau"] is not None:
        number("firstvar.tau", v["tau"], lo=0.0)

    st = cfg["selftest"]
    for key in ("n", "extended_n"):
        number(f"selftest.{key}", st[key], integer=True)
        if int(st[key]) % 2 == 0 or int(st[key]) < 17:
            fail(f"selftest.{key}", "must be odd and >= 17")


def load_config(data: dict | None = None, overrides=(), text: str | None = None,
                source: str | None = None) -> RunConfig:
    user = {} if data is None else data
    if not isinstance(user, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    cfg = _merge(DEFAULTS, user, text)
    for item in overrides:
        keys, val = _parse_override(item)
        _apply_override(cfg, keys, val)
    _validate(cfg, text)
    return RunConfig(cfg, source)


def parse_config(path: str | Path | None, overrides=()) -> RunConfig:
    """Read, merge with defaults, apply overrides, and validate."""
    if path is None:
        return load_config(None, overrides)
    p = Path(path)
    if not p.is_file():
        raise ConfigError("--config", f"no such file {p}")
    text = p.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"malformed JSON: {exc.msg}", exc.lineno) from exc
    return load_config(data, overrides, text=text, source=str(p))
