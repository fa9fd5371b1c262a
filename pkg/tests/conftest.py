import numpy as np
import pytest

from hessfb.energy import EnergyParams
from hessfb.grid import make_grid
from hessfb.solver import SolveConfig, builtin_boundary, minimize, minimize_unpenalized

_SOLVES = {}


def solve(n, data, lam, p=2.0, unpenalized=False):
    """Session-cached solves; the solver is deterministic so sharing is safe."""
    key = (n, data, lam, p, unpenalized)
    if key not in _SOLVES:
        g = make_grid(n)
        params = EnergyParams(p=p, Lambda=lam)
        fn = minimize_unpenalized if unpenalized else minimize
        _SOLVES[key] = fn(g, builtin_boundary(g, data), params, SolveConfig())
    return _SOLVES[key]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def g17():
    return make_grid(17)


@pytest.fixture(scope="session")
def g33():
    return make_grid(33)


@pytest.fixture(scope="session")
def g65():
    return make_grid(65)


@pytest.fixture(scope="session")
def g129():
    return make_grid(129)
