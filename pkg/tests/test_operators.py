import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hessfb.grid import SymMat
from hessfb.operators import (OperatorSpec, SingularOperatorError, axiom_sampler, f_eval,
                              f_grad)

SF0 = OperatorSpec("smoothed-frobenius", eta=0.0)
SF = OperatorSpec("smoothed-frobenius", eta=1e-3)
LT = OperatorSpec("linear-trace", lam=float(np.sqrt(2.0)))
ident = SymMat(np.array(1.0), np.array(0.0), np.array(1.0))

entry = st.floats(-1e3, 1e3, allow_nan=False)
mats = st.tuples(entry, entry, entry).map(lambda t: SymMat(*map(np.array, t)))


def test_f_eval_identity():
    assert f_eval(SF0, ident) == pytest.approx(np.sqrt(2.0), abs=0, rel=1e-15)
    assert f_eval(SF, ident) == pytest.approx(np.sqrt(2 + 1e-6) - 1e-3, rel=1e-14)
    assert f_eval(LT, ident) == 2.0


def test_array_input():
    assert f_eval(SF0, np.eye(2)) == pytest.approx(np.sqrt(2.0))


@pytest.mark.parametrize("spec", [SF0, SF, LT, OperatorSpec("scaled-frobenius", lam=3.0),
                                  OperatorSpec("scaled-frobenius", lam=2.0, eta=0.0)])
def test_zero_maps_to_zero(spec):
    assert f_eval(spec, np.zeros((2, 2))) == 0.0


def test_f_grad_examples():
    g = f_grad(LT, SymMat(np.array(4.0), np.array(-2.0), np.array(7.0)))
    assert (g.xx, g.xy, g.yy) == (1.0, 0.0, 1.0)
    g = f_grad(SF0, ident)
    assert np.allclose([g.xx, g.xy, g.yy], [1 / np.sqrt(2), 0.0, 1 / np.sqrt(2)])


def test_f_grad_singular_without_smoothing():
    with pytest.raises(SingularOperatorError):
        f_grad(SF0, np.zeros((2, 2)))


def test_f_grad_matches_finite_differences(rng):
    for spec in (SF, OperatorSpec("scaled-frobenius", lam=2.0, eta=1e-3), LT):
        for _ in range(1000):
            e = rng.standard_normal(3) * 10.0 ** rng.uniform(-2, 2)
            m = SymMat(*map(np.array, e))
            grad = f_grad(spec, m)
            step = 1e-6 * (1 + m.frobenius())
            fd = []
            for k in range(3):
                d = np.zeros(3)
                d[k] = step
                fp = f_eval(spec, SymMat(*map(np.array, e + d)))
                fm = f_eval(spec, SymMat(*map(np.array, e - d)))
                fd.append((fp - fm) / (2 * step))
            # dF/dm_xy counts the two symmetric slots
            an = np.array([grad.xx, 2 * grad.xy, grad.yy])
            assert np.allclose(fd, an, rtol=1e-6, atol=1e-9)


def test_axiom_examples():
    assert axiom_sampler(SF0, "A2", 10_000, seed=0).pass_rate == 1.0
    assert axiom_sampler(LT, "A1", 10_000, seed=0).pass_rate == 1.0
    rep = axiom_sampler(LT, "A3", 10_000, seed=0)
    assert rep.pass_rate < 1.0 and rep.worst_case is not None


def test_smoothed_passes_a3_and_a1():
    assert axiom_sampler(SF, "A3", 10_000, seed=1).pass_rate == 1.0
    # a norm is not elliptic in the A1 sense (F(M+N) - F(M) can be ~0 for N >= 0)
    assert axiom_sampler(SF, "A1", 10_000, seed=1).pass_rate < 1.0


def test_sampler_is_seeded():
    a = axiom_sampler(LT, "A3", 500, seed=7)
    b = axiom_sampler(LT, "A3", 500, seed=7)
    assert a == b


def test_sampler_rejects_unknown():
    with pytest.raises(ValueError):
        axiom_sampler(SF, "A4")


@pytest.mark.parametrize("kw", [{"variant": "nope"}, {"lam": 0.5}, {"eta": -1.0}])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        OperatorSpec(**kw)


def test_spec_json_roundtrip():
    spec = OperatorSpec("scaled-frobenius", lam=2.0, eta=0.01)
    assert spec.to_json() == {"variant": "scaled-frobenius", "lambda": 2.0, "eta": 0.01}
    assert OperatorSpec.from_json(spec.to_json()) == spec


@given(mats, mats)
@settings(max_examples=300)
def test_smoothed_is_one_lipschitz(m, n):
    lhs = abs(f_eval(SF, m) - f_eval(SF, n))
    assert lhs <= (m - n).frobenius() * (1 + 1e-12) + 1e-12


@given(mats, st.floats(1e-3, 1e3))
@settings(max_examples=300)
def test_positive_homogeneity(m, t):
    for spec in (SF0, LT, OperatorSpec("scaled-frobenius", lam=1.5, eta=0.0)):
        a, b = f_eval(spec, m.scale(t)), t * f_eval(spec, m)
        assert abs(a - b) <= 1e-12 * (1 + abs(b))


@given(mats, mats)
@settings(max_examples=300)
def test_convexity_midpoint(m, n):
    mid = f_eval(SF, (m + n).scale(0.5))
    avg = 0.5 * (f_eval(SF, m) + f_eval(SF, n))
    assert mid <= avg + 1e-12 * (1 + abs(avg))


@given(mats)
@settings(max_examples=300)
def test_smoothed_within_eta_of_norm(m):
    assert 0.0 <= m.frobenius() - f_eval(SF, m) <= SF.eta + 1e-12
