import math

import numpy as np
import pytest

from freebound.audit import (
    area_bound_report, boundary_vertex_field, calibration_audit, eps_for_edges, equality_alignment,
    isoperimetric_check,
)
from freebound.errors import DomainError, MeshError
from freebound.fields import conformal_W, sphere_calibration_field
from freebound.mesh import make_mesh, minimize


def audit_at(setup, m, k=5.0):
    W = boundary_vertex_field(m, setup.geom, setup.chart)
    return calibration_audit(m, W, eps_for_edges(m, W, k))


def test_euclidean_flat_disk(euclid):
    m = make_mesh("flat-disk", 1.0, 40)
    rec = audit_at(euclid, m)
    assert rec.div_integral == pytest.approx(math.pi, rel=0.01)
    assert rec.slack_div >= -1e-12
    assert abs(rec.residual) <= 0.01 * rec.area_g
    assert abs(rec.boundary_flux) <= 1e-3
    assert rec.chain_holds()


def test_sphere_hemisphere_singular_flux(sphere):
    m = make_mesh("flat-disk", 2.0, 40)
    rec = audit_at(sphere, m)
    assert rec.singular_flux == pytest.approx(2 * math.pi, rel=0.02)
    assert rec.bound == pytest.approx(2 * math.pi)


def test_singular_flux_converges_under_eps_refinement(sphere):
    m = make_mesh("flat-disk", 2.0, 60)
    errs = [abs(audit_at(sphere, m, k).slack_singular) for k in (20, 10, 5)]
    assert errs[0] > errs[1] > errs[2]


def test_residual_decreases_under_refinement(gauss):
    # at fixed eps; with eps tied to the edge length the error near y is scale invariant
    res, flux = [], []
    for n in (10, 20, 40):
        m, _ = minimize(make_mesh("perturbed-disk", 1.4, n, seed=3), gauss.chart)
        rec = calibration_audit(m, boundary_vertex_field(m, gauss.geom, gauss.chart), 0.6)
        res.append(abs(rec.residual))
        flux.append(abs(rec.boundary_flux))
    # at least first order in the edge length, which halves each step
    assert res[1] <= 0.5 * res[0] and res[2] <= 0.5 * res[1]
    assert flux[2] <= 0.5 * flux[0]


def test_y_must_be_a_boundary_vertex(sphere):
    m = make_mesh("flat-disk", 2.0, 20)
    R = math.pi / 2
    y = np.array([2 * math.cos(0.01), 2 * math.sin(0.01), 0.0])
    W = conformal_W(sphere.geom, sphere.chart, R, y)
    with pytest.raises(MeshError):
        calibration_audit(m, W, 0.5)
    with pytest.raises(MeshError):
        boundary_vertex_field(m, sphere.geom, sphere.chart, vertex=0)


def test_eps_must_resolve_the_arc(sphere):
    m = make_mesh("flat-disk", 2.0, 20)
    W = boundary_vertex_field(m, sphere.geom, sphere.chart)
    with pytest.raises(DomainError):
        calibration_audit(m, W, 1e-3)


def test_sphere_extrinsic_field_rejected(sphere):
    m = make_mesh("flat-disk", 2.0, 10)
    W = sphere_calibration_field(sphere.geom, math.pi / 2, np.eye(3)[2], np.eye(3)[0])
    with pytest.raises(DomainError):
        calibration_audit(m, W, 0.5)


@pytest.mark.parametrize("R", [math.pi / 3, math.pi / 2])
def test_isoperimetric_equality_on_geodesic_disks(sphere, R):
    m = make_mesh("flat-disk", sphere.chart.s_radius(R), 40)
    rep = isoperimetric_check(m, sphere.chart, R)
    assert rep.passed
    assert rep.area_g == pytest.approx(rep.rhs, rel=5e-3)
    assert rep.area_g == pytest.approx(2 * math.pi * (1 - math.cos(R)), rel=5e-3)


def test_isoperimetric_rejects_other_metrics(gauss):
    m = make_mesh("flat-disk", 1.0, 10)
    with pytest.raises(DomainError):
        isoperimetric_check(m, gauss.chart, 0.9)


def test_area_bound_report(sphere):
    m = make_mesh("flat-disk", 2.0, 40)
    rep = area_bound_report(m, sphere.geom, math.pi / 2, sphere.chart)
    assert rep.passed and abs(rep.gap_rel) <= 5e-3
    shrunk = m.copy(m.vertices * 0.9)
    assert not area_bound_report(shrunk, sphere.geom, math.pi / 2, sphere.chart).passed


def test_equality_alignment():
    assert equality_alignment(make_mesh("flat-disk", 1.0, 12)) == 1.0
    # a rotation about a diameter still contains the origin
    assert equality_alignment(make_mesh("tilted-disk", 1.0, 12)) == 1.0
    off = make_mesh("flat-disk", 1.0, 12)
    off.vertices[:, 2] += 0.3
    assert equality_alignment(off) < 1.0
