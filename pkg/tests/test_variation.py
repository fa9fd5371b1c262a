import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hessfb.energy import EnergyParams, dirichlet_density
from hessfb.grid import gradient, hessian, integrate, make_grid
from hessfb.operators import f_eval, f_grad
from hessfb.variation import (ZERO, Deformation, DeformationSum, DeformationTooLargeError,
                              _bump_derivatives, build_M, divergence_of,
                              energy_variation_analytic, energy_variation_numeric,
                              measure_variation, pushforward)


def smooth(g):
    return g.field(lambda x, y: np.exp(0.6 * x) * np.cos(0.9 * y) + 0.3 * x * y * y + 0.5)


def test_zero_field_gives_zero(g33):
    u = smooth(g33)
    m = build_M(g33, u, ZERO)
    assert not np.any(m.xx) and not np.any(m.xy) and not np.any(m.yy)
    assert energy_variation_analytic(g33, u, ZERO, EnergyParams()) == 0.0
    assert energy_variation_numeric(g33, u, ZERO, EnergyParams()) == 0.0
    assert measure_variation(g33, u, ZERO) == 0.0


def test_affine_M(g33):
    c = (0.7, -0.4)
    u = g33.field(lambda x, y: c[0] * x + c[1] * y + 0.2)
    d = Deformation("radial", (0.1, 0.0), 0.5, (1.3, 0.0))
    m = build_M(g33, u, d)
    _, _, d2 = d.evaluate(g33.x, g33.y)
    want = c[0] * d2[0] + c[1] * d2[1]
    a = g33.active
    assert np.allclose(m.xx[a], want[0, 0][a], atol=1e-10)
    assert np.allclose(m.xy[a], want[0, 1][a], atol=1e-10)
    assert np.allclose(m.yy[a], want[1, 1][a], atol=1e-10)


def test_affine_variation_vanishes_at_eta_zero(g33):
    from hessfb.operators import OperatorSpec
    u = g33.field(lambda x, y: 0.3 * x - y)
    params = EnergyParams(operator=OperatorSpec("smoothed-frobenius", eta=0.0))
    d = Deformation("translate", (0.0, 0.1), 0.5, (1.0, 1.0))
    # F(0) = 0 kills both integrands; F_ij at the zero matrix is never reached
    with np.errstate(all="ignore"):
        fval = f_eval(params.operator, hessian(g33, u))
    assert np.allclose(fval[g33.active], 0.0, atol=1e-12)
    div = divergence_of(d, g33)
    assert integrate(g33, fval**2 * div) == pytest.approx(0.0, abs=1e-12)


def test_paraboloid_M_term_by_term(g33):
    u = g33.field(lambda x, y: 0.5 * (x * x + y * y))
    d = Deformation("translate", (0.2, -0.1), 0.6, (0.5, 1.0))
    m = build_M(g33, u, d)
    _, dxi, d2xi = d.evaluate(g33.x, g33.y)
    # D2u = I and Du = x exactly on a quadratic
    want = dxi + np.swapaxes(dxi, 0, 1) + g33.x * d2xi[0] + g33.y * d2xi[1]
    a = g33.active
    for got, (i, j) in ((m.xx, (0, 0)), (m.xy, (0, 1)), (m.yy, (1, 1))):
        assert np.allclose(got[a], 0.5 * (want[i, j] + want[j, i])[a], atol=1e-9)


def test_linearity_in_xi(g33):
    u = smooth(g33)
    params = EnergyParams(p=2.5)
    d1 = Deformation("translate", (0.1, 0.1), 0.4, (1.0, -0.5))
    d2 = Deformation("radial", (-0.2, 0.0), 0.5, (0.7, 0.0))
    a, b = 1.7, -0.3
    both = energy_variation_analytic(g33, u, DeformationSum(((a, d1), (b, d2))), params)
    sep = a * energy_variation_analytic(g33, u, d1, params) + b * energy_variation_analytic(g33, u, d2, params)
    assert both == pytest.approx(sep, rel=1e-12, abs=1e-13)


@pytest.mark.parametrize("power", [3, 6])
def test_bump_derivatives_fd(power, rng):
    c, r = (0.1, -0.2), 0.5
    pts = rng.uniform(-0.3, 0.3, size=(2, 20)) + np.array(c)[:, None]
    s = 1e-6
    _, d1, d2, d3 = _bump_derivatives(pts[0], pts[1], c, r, power)
    for k, e in enumerate(np.eye(2)):
        fp = _bump_derivatives(pts[0] + s * e[0], pts[1] + s * e[1], c, r, power)
        fm = _bump_derivatives(pts[0] - s * e[0], pts[1] - s * e[1], c, r, power)
        assert np.allclose((fp[0] - fm[0]) / (2 * s), d1[k], atol=1e-6)
        assert np.allclose((fp[1] - fm[1]) / (2 * s), d2[:, k], atol=1e-5)
        assert np.allclose((fp[2] - fm[2]) / (2 * s), d3[:, :, k], atol=1e-4)


def test_deformation_validation():
    with pytest.raises(ValueError, match="kind"):
        Deformation("twist", (0, 0), 0.3)
    with pytest.raises(ValueError, match="inside"):
        Deformation("translate", (0.8, 0), 0.3)
    with pytest.raises(ValueError, match="power"):
        Deformation("translate", (0, 0), 0.3, power=2)


@settings(max_examples=30, deadline=None)
@given(cx=st.floats(-0.3, 0.3), cy=st.floats(-0.3, 0.3), r=st.floats(0.1, 0.6),
       s=st.floats(-2, 2), power=st.sampled_from([3, 4, 6]))
def test_solenoidal_divergence_free(cx, cy, r, s, power):
    d = Deformation("solenoidal", (cx, cy), r, (s, 0.0), power)
    xs = np.linspace(cx - r, cx + r, 17)
    gx, gy = np.meshgrid(xs, xs + cy - cx)
    _, dxi, _ = d.evaluate(gx, gy)
    assert np.max(np.abs(dxi[0, 0] + dxi[1, 1])) <= 1e-9 * (1 + abs(s) / r)


def test_measure_variation_solenoidal(g65):
    u = g65.field(lambda x, y: 0.4 - np.hypot(x, y))
    d = Deformation("solenoidal", (0.2, 0.1), 0.4, (1.0, 0.0))
    assert measure_variation(g65, u, d) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("d", [
    Deformation("translate", (0.1, 0.2), 0.4, (1.0, 0.3)),
    Deformation("radial", (0.0, 0.0), 0.8, (1.0, 0.0)),
    Deformation("radial", (-0.3, 0.2), 0.5, (-2.0, 0.0)),
])
def test_measure_variation_full_disk(g65, d):
    u = g65.field(lambda x, y: 1.0 + 0 * x)
    assert abs(measure_variation(g65, u, d)) <= 1e-3


def _deformed_disk_rate(d, radius=0.5, t=1e-3):
    th = np.linspace(0.0, 2 * np.pi, 20001)[:-1]
    x, y = radius * np.cos(th), radius * np.sin(th)

    def area(s):
        xi, _, _ = d.evaluate(x, y)
        px, py = x + s * xi[0], y + s * xi[1]
        return 0.5 * abs(np.sum(px * np.roll(py, -1) - np.roll(px, -1) * py))

    return (area(t) - area(-t)) / (2 * t)


@pytest.mark.parametrize("center,radius", [((0.0, 0.0), 0.8), ((0.3, 0.0), 0.5), ((0.2, 0.1), 0.6)])
def test_measure_variation_cone_shoelace(g129, center, radius):
    d = Deformation("radial", center, radius, (1.0, 0.0))
    u = g129.field(lambda x, y: 0.5 - np.hypot(x, y))
    assert measure_variation(g129, u, d) == pytest.approx(_deformed_disk_rate(d), rel=1e-2)


def test_measure_variation_cone_refines():
    d = Deformation("radial", (0.3, 0.0), 0.5, (1.0, 0.0))
    want = _deformed_disk_rate(d)
    errs = []
    for n in (65, 257):
        g = make_grid(n)
        errs.append(abs(measure_variation(g, g.field(lambda x, y: 0.5 - np.hypot(x, y)), d) - want))
    assert errs[1] < 0.5 * errs[0]


def test_pushforward_identities(g33):
    u = smooth(g33)
    d = Deformation("translate", (0.0, 0.0), 0.5)
    assert np.array_equal(pushforward(g33, u, d, 0.0), u)
    assert np.array_equal(pushforward(g33, u, ZERO, 0.3), u)


def test_pushforward_translation(g65):
    u = g65.field(lambda x, y: x)
    d = Deformation("translate", (0.1, 0.0), 0.5, (1.0, 0.0))
    t = 0.05
    ut = pushforward(g65, u, d, t)
    # exact inverse by fixed point on the analytic field: y = x - t xi(y)
    x0, y0 = g65.x, g65.y
    yx = x0.copy()
    for _ in range(60):
        xi, _, _ = d.evaluate(yx, y0)
        yx = x0 - t * xi[0]
    a = g65.active
    # bicubic convolution reproduces linear data, so only roundoff remains
    assert np.max(np.abs(ut[a] - yx[a])) < 1e-12
    assert np.array_equal(ut[~a], u[~a])


def test_pushforward_round_trip_cubic_in_h():
    d = Deformation("radial", (0.1, 0.0), 0.5, (1.0, 0.0), power=6)
    t = 1e-3
    errs = []
    for n in (33, 65, 129):
        g = make_grid(n)
        u = smooth(g)
        back = pushforward(g, pushforward(g, u, d, t), d, -t)
        errs.append(np.max(np.abs(back - u)[g.active]))
        # Psi_{-t} undoes Psi_t only up to t^2 |xi| |Dxi|; that floor is below 1e-5 here
        assert errs[-1] <= 50 * g.h**3 + 1e-5


def test_pushforward_too_large(g33):
    d = Deformation("radial", (0.0, 0.0), 0.5, (1.0, 0.0))
    with pytest.raises(DeformationTooLargeError):
        pushforward(g33, smooth(g33), d, 10.0)


def test_numeric_matches_analytic_smooth(g65):
    u = smooth(g65)
    params = EnergyParams(p=2)
    for d in (Deformation("translate", (0.1, 0.0), 0.6, (1.0, 0.5), power=6),
              Deformation("radial", (-0.1, 0.1), 0.6, (1.0, 0.0), power=6)):
        a = energy_variation_analytic(g65, u, d, params)
        nv = energy_variation_numeric(g65, u, d, params)
        assert a == pytest.approx(nv, rel=1e-2)


def _origin_example(power=3):
    g = make_grid(65)
    u = g.field(lambda x, y: 0.5 * (x * x + y * y) + 0.2)
    d = Deformation("radial", (0.0, 0.0), 0.5, (1.0, 0.0), power)
    params = EnergyParams(p=2)
    return g, u, d, params


@pytest.mark.xfail(strict=True, reason="for D2u = I the exact variation is -2 * integral of "
                   "div xi = 0, so the numeric value is roundoff and a relative error is undefined")
def test_origin_bump_relative_agreement():
    g, u, d, params = _origin_example()
    a = energy_variation_analytic(g, u, d, params)
    nv = energy_variation_numeric(g, u, d, params)
    assert abs(a - nv) <= 1e-2 * abs(nv)


@pytest.mark.parametrize("power", [3, 6])
def test_origin_bump_both_vanish(power):
    g, u, d, params = _origin_example(power)
    _, dxi, _ = d.evaluate(g.x, g.y)
    scale = integrate(g, dirichlet_density(g, u, params) * np.sqrt(np.sum(dxi**2, axis=(0, 1))))
    a = energy_variation_analytic(g, u, d, params)
    nv = energy_variation_numeric(g, u, d, params)
    assert abs(nv) <= 1e-9 * scale
    assert abs(a) <= 1e-2 * scale


def test_coefficient_is_minus_p():
    # at p = 3 the numeric derivative sides with -p, not -d (d = 2)
    g = make_grid(65)
    u = smooth(g)
    params = EnergyParams(p=3)
    d = Deformation("radial", (0.1, 0.0), 0.6, (1.0, 0.0), power=6)
    hs = hessian(g, u)
    fval = np.where(g.active, f_eval(params.operator, hs), 0.0)
    term = integrate(g, fval**2 * f_grad(params.operator, hs).inner(build_M(g, u, d)))
    with_p = energy_variation_analytic(g, u, d, params)
    with_d = with_p + (3 - 2) * term
    nv = energy_variation_numeric(g, u, d, params)
    assert abs(with_p - nv) < 1e-2 * abs(nv) < abs(with_d - nv)


def test_divergence_matches_fd(g65):
    d = Deformation("translate", (0.0, 0.2), 0.5, (0.3, 1.0))
    xi, _, _ = d.evaluate(g65.x, g65.y)
    # third derivatives of the profile scale like 1/R^3, hence the loose constant
    dx, _ = gradient(g65, xi[0])
    _, dy = gradient(g65, xi[1])
    deep = g65.deep_interior(1)
    assert np.allclose(divergence_of(d, g65)[deep], (dx + dy)[deep], atol=100 * g65.h**2)
