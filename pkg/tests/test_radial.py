import math

import numpy as np
import pytest
from scipy.integrate import quad

from freebound.errors import DomainError
from freebound.radial import J_integral, RadialGeometry, build_chart, disk_area, integral_I, phi
from freebound.warp import from_conformal_factor, make_preset

from conftest import gaussian_r_of_s


def test_integral_I_examples(sphere, euclid, gauss):
    assert integral_I(sphere.geom, math.pi / 2) == pytest.approx(1.0, abs=1e-15)
    assert integral_I(euclid.geom, 2.0) == pytest.approx(2.0)
    assert integral_I(gauss.geom, gaussian_r_of_s(2.0)) == pytest.approx(2 * (1 - math.exp(-1)), abs=1e-12)


def test_phi_examples(preset, sphere, euclid):
    assert phi(sphere.geom, math.pi / 2) == pytest.approx(1.0)
    assert phi(preset.geom, 0.0) == 0.0
    assert phi(euclid.geom, 3.0) == pytest.approx(1.5)


def test_phi_continuous_at_series_switch(preset):
    # across the switch phi may only move by its slope 1/2 times the step
    a = phi(preset.geom, 1e-3 * (1 - 1e-9))
    b = phi(preset.geom, 1e-3 * (1 + 1e-9))
    assert abs((b - a) - 0.5 * 2e-12) < 1e-14


def test_disk_area_examples(sphere, euclid, gauss):
    assert disk_area(sphere.geom, math.pi / 2) == pytest.approx(2 * math.pi)
    assert disk_area(euclid.geom, 1.0) == pytest.approx(math.pi)
    assert disk_area(gauss.geom, gaussian_r_of_s(2.0)) == pytest.approx(7.943, abs=1e-3)
    with pytest.raises(DomainError):
        disk_area(sphere.geom, 0.0)


def test_J_examples(sphere, euclid, gauss):
    assert J_integral(euclid.geom, 5.0) == 0.0
    assert J_integral(sphere.geom, math.pi / 2) == pytest.approx(-1.0)
    assert J_integral(gauss.geom, gaussian_r_of_s(2.0)) == pytest.approx(-4 * math.exp(-1), abs=1e-12)


@pytest.mark.parametrize("name", ["sphere", "gaussian-shrinker"])
def test_quadrature_path_matches_closed_forms(name):
    p = make_preset(name)
    closed = RadialGeometry(p)
    quadr = RadialGeometry(p, use_closed=False)
    r = np.linspace(0.0, 0.95 * min(p.r_max, 2.4), 40)
    assert np.allclose(quadr.I(r), closed.I(r), atol=1e-13)
    assert np.allclose(quadr.J(r), closed.J(r), atol=1e-12)
    assert np.allclose(quadr.I_over_h2(r), closed.I_over_h2(r), atol=1e-12)


def test_quadrature_against_scipy_quad(gauss):
    # independent adaptive quadrature as oracle
    p = gauss.profile
    for R in (0.3, 1.0, 1.8, 2.3):
        I = quad(lambda t: float(p.h(t)), 0, R, epsabs=1e-13)[0]
        J = quad(lambda t: 2 * quad(lambda u: float(p.h(u)), 0, t, epsabs=1e-13)[0] * float(p.d2h(t)),
                 0, R, epsabs=1e-12)[0]
        geom = RadialGeometry(p, use_closed=False)
        assert float(geom.I(R)) == pytest.approx(I, abs=1e-11)
        assert float(geom.J(R)) == pytest.approx(J, abs=1e-9)


def test_out_of_domain(sphere):
    for f in (sphere.geom.I, sphere.geom.J, sphere.geom.phi):
        with pytest.raises(DomainError):
            f(3.5)


def test_chart_examples(euclid, sphere, gauss):
    r = np.linspace(0, 5, 6)
    assert np.allclose(euclid.chart.s_of_r(r), r)
    assert np.allclose(euclid.chart.rho(r), 1.0)
    assert float(sphere.chart.s_of_r(math.pi / 2)) == pytest.approx(2.0)
    assert float(sphere.chart.rho(2.0)) == pytest.approx(0.5)
    assert float(gauss.chart.rho(2.0)) == pytest.approx(math.exp(-0.5), rel=1e-15)


@pytest.mark.parametrize("name", ["euclidean", "sphere", "gaussian-shrinker"])
def test_generic_chart_matches_closed(name):
    p = make_preset(name)
    closed = build_chart(p)
    generic = build_chart(p, use_closed=False)
    r = np.linspace(0.0, 0.9 * min(p.r_max, 2.3), 25)
    s = np.asarray(closed.s_of_r(r))
    assert np.allclose(generic.s_of_r(r), s, rtol=1e-11, atol=1e-13)
    assert np.allclose(generic.r_of_s(s), r, rtol=1e-11, atol=1e-13)
    assert np.allclose(generic.rho(s), closed.rho(s), rtol=1e-10)
    assert np.allclose(generic.rho_prime(s), closed.rho_prime(s), atol=1e-8)


def test_chart_ode_and_origin(preset):
    c = preset.chart
    r = np.array([1e-6, 1e-4])
    assert np.allclose(np.asarray(c.s_of_r(r)) / r, 1.0, atol=1e-7)
    # ds/dr = s/h, checked by central differences
    r0 = np.linspace(0.2, 1.4, 5)
    d = 1e-6
    ds = (np.asarray(c.s_of_r(r0 + d)) - np.asarray(c.s_of_r(r0 - d))) / (2 * d)
    assert np.allclose(ds, np.asarray(c.s_of_r(r0)) / np.asarray(preset.profile.h(r0)), rtol=1e-7)
    # h = s rho
    s0 = np.asarray(c.s_of_r(r0))
    assert np.allclose(s0 * np.asarray(c.rho(s0)), preset.profile.h(r0), rtol=1e-12)


def test_chart_from_conformal_profile():
    rho = lambda s: np.exp(-np.asarray(s) ** 2 / 8)
    p = from_conformal_factor(rho, lambda s: -0.25 * np.asarray(s) * rho(s))
    c = build_chart(p)
    s = np.linspace(0.1, 3.0, 10)
    assert np.allclose(c.rho(s), rho(s), rtol=1e-9)
