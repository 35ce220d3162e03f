import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from freebound.errors import DomainError, NormalizationError
from freebound.warp import (
    check_admissibility, conformal_from_table, curvature_K, from_conformal_factor, from_table,
    load_metric_config, load_profile_csv, make_preset, resolve_metric,
)

from conftest import gaussian_r_of_s


def test_preset_values():
    assert make_preset("sphere").h(math.pi / 2) == pytest.approx(1.0, abs=1e-15)
    assert make_preset("euclidean").h(3.0) == 3.0
    g = make_preset("gaussian-shrinker")
    assert float(g.dh(gaussian_r_of_s(2.0))) == pytest.approx(0.0, abs=1e-12)
    assert make_preset("sphere").r_max == math.pi
    assert math.isinf(make_preset("euclidean").r_max)


def test_unknown_preset():
    with pytest.raises(ValueError):
        make_preset("torus")


def test_gaussian_derivatives_match_finite_differences():
    g = make_preset("gaussian-shrinker")
    r = np.linspace(0.2, 2.2, 9)
    d = 1e-5
    assert np.allclose((g.h(r + d) - g.h(r - d)) / (2 * d), g.dh(r), atol=1e-8)
    assert np.allclose((g.dh(r + d) - g.dh(r - d)) / (2 * d), g.d2h(r), atol=1e-7)
    assert np.allclose((g.d2h(r + d) - g.d2h(r - d)) / (2 * d), g.d3h(r), atol=1e-6)


def test_from_conformal_factor_identity():
    p = from_conformal_factor(lambda s: np.ones_like(np.asarray(s, dtype=float)),
                              lambda s: np.zeros_like(np.asarray(s, dtype=float)))
    r = np.linspace(0, 10, 11)
    assert np.allclose(p.h(r), r, atol=1e-12)


def test_from_conformal_factor_sphere():
    rho = lambda s: 1 / (1 + np.asarray(s) ** 2 / 4)
    drho = lambda s: -0.5 * np.asarray(s) * rho(s) ** 2
    p = from_conformal_factor(rho, drho, s_max=200.0)
    r = np.linspace(0.0, 3.0, 31)
    assert np.allclose(p.h(r), np.sin(r), atol=1e-10)
    assert np.allclose(p.dh(r), np.cos(r), atol=1e-8)


def test_from_conformal_factor_gaussian_radius():
    p = from_conformal_factor(lambda s: np.exp(-np.asarray(s) ** 2 / 8),
                              lambda s: -0.25 * np.asarray(s) * np.exp(-np.asarray(s) ** 2 / 8))
    oracle = quad(lambda t: math.exp(-t * t / 8), 0, 1, epsabs=1e-14)[0]
    # h(r) = s rho(s) at the r corresponding to s = 1
    assert oracle == pytest.approx(0.9599, abs=1e-4)
    assert float(p.h(oracle)) == pytest.approx(math.exp(-1 / 8), abs=1e-10)


def test_from_conformal_factor_errors():
    with pytest.raises(NormalizationError):
        from_conformal_factor(lambda s: 2 + 0 * np.asarray(s), lambda s: 0 * np.asarray(s))
    with pytest.raises(DomainError):
        from_conformal_factor(lambda s: 1 - np.asarray(s) ** 2, lambda s: -2 * np.asarray(s), s_max=3.0)


def test_admissibility():
    rep = check_admissibility(make_preset("sphere"), np.linspace(0.01, 3.1, 200))
    assert rep.passed and rep.min_K == pytest.approx(1.0)
    rep = check_admissibility(make_preset("euclidean"), np.linspace(0.01, 5, 20))
    assert not rep.c2_ok and rep.c1_ok and rep.degenerate
    assert any("(C2)" in f for f in rep.failures)
    g = make_preset("gaussian-shrinker")
    rep = check_admissibility(g, np.linspace(1e-3, gaussian_r_of_s(2.0), 100))
    assert rep.passed and rep.min_K > 0


def test_curvature_K():
    assert curvature_K(make_preset("sphere"), 1.0) == pytest.approx(1.0)
    assert curvature_K(make_preset("euclidean"), 1.0) == 0.0
    assert curvature_K(make_preset("sphere"), 0.0) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        curvature_K(make_preset("sphere"), 4.0)


def test_gaussian_K_closed_form():
    g = make_preset("gaussian-shrinker")
    s = np.linspace(0.1, 2.0, 7)
    r = np.array([gaussian_r_of_s(v) for v in s])
    rho = np.exp(-s**2 / 8)
    # K = -h''/h with h'' = -s/(2 rho), h = s rho
    assert np.allclose(curvature_K(g, r), 1 / (2 * rho**2), rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 3.1))
def test_sphere_identities(r):
    p = make_preset("sphere")
    assert float(p.h(r)) ** 2 + float(p.dh(r)) ** 2 == pytest.approx(1.0)


def test_table_profiles(tmp_path):
    r = np.linspace(0, 3, 301)
    prof = from_table(r, np.sin(r))
    t = np.linspace(0.1, 2.9, 15)
    assert np.allclose(prof.h(t), np.sin(t), atol=1e-8)
    assert np.allclose(prof.dh(t), np.cos(t), atol=1e-5)

    s = np.linspace(0, 4, 401)
    cp = conformal_from_table(s, 1 / (1 + s**2 / 4))
    assert float(cp.h(1.0)) == pytest.approx(math.sin(1.0), abs=1e-7)

    f = tmp_path / "sin.csv"
    f.write_text("r,h\n" + "\n".join(f"{float(a)!r},{float(b)!r}" for a, b in zip(r, np.sin(r))) + "\n")
    assert float(load_profile_csv(f).h(1.0)) == pytest.approx(math.sin(1.0), abs=1e-8)
    assert float(resolve_metric(str(f)).h(1.0)) == pytest.approx(math.sin(1.0), abs=1e-8)

    cfg = tmp_path / "m.cfg"
    cfg.write_text("# a sphere\nkind = warp\ntable = sin.csv\n")
    assert float(load_metric_config(cfg).h(1.0)) == pytest.approx(math.sin(1.0), abs=1e-8)
    cfg.write_text("preset = sphere\n")
    assert load_metric_config(cfg).name == "sphere"
    cfg.write_text("kind = conformal\ntable = sin.csv\n")
    with pytest.raises(ValueError):
        load_metric_config(cfg)


def test_domain_checks():
    s = make_preset("sphere")
    with pytest.raises(DomainError):
        s.check_domain(-0.1)
    with pytest.raises(DomainError):
        s.check_domain(math.pi)
    assert s.check_domain(math.pi, allow_end=True) == math.pi


def test_rho_second_optional():
    rho = lambda s: np.exp(-np.asarray(s) ** 2 / 8)
    drho = lambda s: -np.asarray(s) / 4 * rho(s)
    d2rho = lambda s: (np.asarray(s) ** 2 / 16 - 0.25) * rho(s)
    exact = from_conformal_factor(rho, drho, d2rho)
    approx = from_conformal_factor(rho, drho)
    r = np.linspace(0.05, 2.0, 40)
    assert np.allclose(approx.d2h(r), exact.d2h(r), rtol=0, atol=1e-8)
