import math

import numpy as np
import pytest

from freebound.errors import DomainError
from freebound.fields import star_term
from freebound.radial import RadialGeometry
from freebound.threshold import (
    GAUSSIAN_ROOT_PAPER, conformal_scalar_curvature, find_R_bar, gaussian_cross_check,
    gaussian_root_function, gaussian_root_reference, scalar_curvature_sign_change, star_max,
)
from freebound.warp import from_table


def test_star_max_examples(euclid, sphere):
    assert star_max(euclid.geom, 3.0) == 0.0
    m = star_max(sphere.geom, math.pi / 3)
    # (*) = (1 - cos r)^2 (I(R) - 1) is negative and decreasing in r: sup is 0 from below
    assert -1e-12 <= m <= 0.0
    assert abs(star_max(sphere.geom, math.pi / 2)) <= 1e-12
    assert star_max(sphere.geom, 2.0) > 0


def test_sphere_star_closed_form(sphere):
    r = np.linspace(0.01, 1.4, 30)
    for R in (0.5, 1.0, 1.4):
        rr = r[r <= R]
        oracle = (1 - np.cos(rr)) ** 2 * (1 - math.cos(R) - 1)
        assert np.allclose(star_term(sphere.geom, rr, R), oracle, atol=1e-14)


def test_find_R_bar_sphere(sphere):
    t = find_R_bar(sphere.geom, chart=sphere.chart)
    assert t.R_bar == pytest.approx(math.pi / 2, abs=1e-6)
    assert t.S_bar == pytest.approx(2.0, abs=1e-5)
    assert t.certificate_below <= 0 < t.certificate_above


def test_find_R_bar_euclidean(euclid):
    t = find_R_bar(euclid.geom, chart=euclid.chart)
    assert math.isinf(t.R_bar) and t.identically_zero and t.at_domain_bound


def test_find_R_bar_gaussian(gauss):
    t = find_R_bar(gauss.geom, chart=gauss.chart)
    x = gaussian_cross_check(t)
    assert t.certificate_below <= 0 < t.certificate_above
    # (*)(S, S) = 0 reduces to the reference polynomial in w = S^2/2
    assert x.solver_S_chart == pytest.approx(math.sqrt(2) * x.reference_root, abs=1e-7)
    assert t.diagonal_root_chart == pytest.approx(t.S_bar, abs=1e-7)


def test_find_R_bar_table_profile():
    r = np.linspace(0, 3.1, 621)
    geom = RadialGeometry(from_table(r, np.sin(r)))
    t = find_R_bar(geom, tol=1e-8)
    assert t.R_bar == pytest.approx(math.pi / 2, abs=1e-4)


def test_gaussian_root():
    root = gaussian_root_reference()
    assert abs(root - GAUSSIAN_ROOT_PAPER) <= 1e-3
    assert abs(gaussian_root_function(root)) < 1e-8
    assert gaussian_root_function(0.0) == 0.0


def test_scalar_curvature(gauss, euclid, sphere):
    assert conformal_scalar_curvature(gauss.chart, 0.0) == pytest.approx(3.0, rel=1e-8)
    s = np.linspace(0, 4, 9)
    assert np.allclose(conformal_scalar_curvature(euclid.chart, s), 0.0, atol=1e-12)
    # unit round sphere in dimension 3 has Scal = 6
    assert np.allclose(conformal_scalar_curvature(sphere.chart, s), 6.0, rtol=1e-8)
    assert scalar_curvature_sign_change(gauss.chart) ** 2 == pytest.approx(24, abs=1e-6)
    with pytest.raises(DomainError):
        conformal_scalar_curvature(gauss.chart, -1.0)
