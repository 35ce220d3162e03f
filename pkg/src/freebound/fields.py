"""Calibration vector fields and their tangential divergences.

Two constructions are provided:

* ``sphere-extrinsic``: on the unit sphere S^n in R^{n+1}, the convex
  combination cos(R) Phi_p + (1 - cos R) Psi_y of a field centred at p and one
  with its pole at y.
* ``conformal``: in the conformal chart of a warped metric, W = Phi - 2 I(R) V
  with Phi = phi(r) d/dr and V = rho^-2 (x - y)/|x - y|^2.

Chart vectors are stored by their chart (euclidean) components. A 2-plane at x
is given by a euclidean-orthonormal frame (e1, e2); since g = rho^2 delta is
conformal, (e1/rho, e2/rho) is g-orthonormal. With grad r = x/(s rho) this
gives |grad^Sigma r|^2 = (<x,e1>^2 + <x,e2>^2)/s^2, which is the quantity
``grad_sigma_r_sq`` below.

Every evaluator accepts a single point or a batch (leading axes) and is pure.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._numerics import central_difference, scalar_or_array
from .errors import DomainError, SingularityError
from .radial import ConformalChart, RadialGeometry
from .warp import SERIES_RADIUS

SINGULAR_GUARD = 1e-12
CHUNK = 4096


def _dot(a, b):
    return np.sum(a * b, axis=-1)


@dataclass(frozen=True)
class TangentPlaneSample:
    """A point x with a euclidean-orthonormal frame spanning a 2-plane."""

    x: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    @property
    def s(self):
        return np.linalg.norm(self.x, axis=-1)

    def perp(self, v):
        """Component of v orthogonal to span(e1, e2)."""
        return v - _dot(v, self.e1)[..., None] * self.e1 - _dot(v, self.e2)[..., None] * self.e2

    @property
    def grad_sigma_r_sq(self):
        s2 = _dot(self.x, self.x)
        tang = _dot(self.x, self.e1) ** 2 + _dot(self.x, self.e2) ** 2
        return np.where(s2 > 0, tang / np.where(s2 > 0, s2, 1.0), 1.0)

    def frame_defect(self):
        return np.max(np.abs(np.stack([
            _dot(self.e1, self.e1) - 1, _dot(self.e2, self.e2) - 1, _dot(self.e1, self.e2)])))

    def __getitem__(self, idx):
        return TangentPlaneSample(self.x[idx], self.e1[idx], self.e2[idx])

    def __len__(self):
        return 1 if self.x.ndim == 1 else self.x.shape[0]


def orthonormal_frame(a, b):
    """Gram-Schmidt on two (batched) vectors."""
    e1 = a / np.linalg.norm(a, axis=-1, keepdims=True)
    b = b - _dot(b, e1)[..., None] * e1
    e2 = b / np.linalg.norm(b, axis=-1, keepdims=True)
    return e1, e2


# -- radial field Phi -------------------------------------------------------


def _J_over_h2(geom: RadialGeometry, r):
    small = r < SERIES_RADIUS
    safe = np.where(small, 1.0, r)
    direct = np.asarray(geom.J(safe)) / np.asarray(geom.h(safe)) ** 2
    series = geom.profile.d3h0() * r**2 / 4  # J ~ -K(0) r^4/4, h ~ r
    return np.where(small, series, direct)


def div_sigma_radial(geom: RadialGeometry, r, grad_sigma_r_sq):
    """Tangential divergence of Phi = phi(r) d/dr on a plane with |grad^Sigma r|^2 given."""
    r = geom.profile.check_domain(r)
    a = np.asarray(grad_sigma_r_sq, dtype=float)
    if np.any((a < -1e-12) | (a > 1 + 1e-12)):
        raise DomainError("grad_sigma_r_sq must lie in [0, 1]")
    return scalar_or_array(1.0 + _J_over_h2(geom, r) * (1.0 - a))


def star_term(geom: RadialGeometry, r, R):
    """Error term (*) = J(r) + I(R) (h'(r) - 1)^2."""
    r = geom.profile.check_domain(r)
    R = geom.profile.check_domain(R)
    if np.any(r > R * (1 + 1e-12)):
        raise DomainError("star_term needs r <= R")
    return scalar_or_array(np.asarray(geom.J(r)) + np.asarray(geom.I(R)) * (np.asarray(geom.profile.dh(r)) - 1.0) ** 2)


# -- sphere-extrinsic construction -------------------------------------------


def sphere_field(kind, center, x):
    """Phi_p = tan(d/2) grad d_p, or Psi_y = -cot(d/2) grad d_y, at x on S^n.

    Written without trigonometry: Phi_p = -(p - c x)/(1 + c) and
    Psi_y = (y - c x)/(1 - c) with c = <center, x>.
    """
    center = np.asarray(center, dtype=float)
    x = np.asarray(x, dtype=float)
    c = _dot(center, x)[..., None]
    if kind == "Phi_p":
        if np.any(1 + c <= SINGULAR_GUARD):
            raise SingularityError("Phi_p is singular at the antipode of p")
        return -(center - c * x) / (1 + c)
    if kind == "Psi_y":
        if np.any(1 - c <= SINGULAR_GUARD):
            raise SingularityError("Psi_y is singular at y")
        return (center - c * x) / (1 - c)
    raise ValueError(f"unknown sphere field {kind!r}")


def grad_distance_sphere(center, x):
    """Gradient of the spherical distance to ``center`` at x (tangent to S^n)."""
    c = _dot(center, x)[..., None]
    return -(center - c * x) / np.sqrt(np.maximum(1 - c * c, 0.0))


def sphere_W(R, p, y, x):
    """cos(R) Phi_p + (1 - cos R) Psi_y on the geodesic ball B_R(p), R <= pi/2."""
    if not 0 < R <= math.pi / 2 + 1e-12:
        raise DomainError("sphere_W needs 0 < R <= pi/2 (ball inside a hemisphere)")
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    if abs(math.acos(np.clip(np.dot(p, y), -1, 1)) - R) > 1e-9:
        raise DomainError("y must lie on the boundary sphere d(p, y) = R")
    x = np.asarray(x, dtype=float)
    if np.any(np.arccos(np.clip(_dot(p, x), -1, 1)) > R + 1e-9):
        raise DomainError("x must lie in the closed ball B_R(p)")
    cR = math.cos(R)
    return cR * sphere_field("Phi_p", p, x) + (1 - cR) * sphere_field("Psi_y", y, x)


# -- conformal construction ---------------------------------------------------


def conformal_V(chart: ConformalChart, y, x):
    """V = rho(|x|)^-2 (x - y)/|x - y|^2 in chart components."""
    x = np.asarray(x, dtype=float)
    d = x - np.asarray(y, dtype=float)
    d2 = _dot(d, d)[..., None]
    if np.any(d2 <= SINGULAR_GUARD**2):
        raise SingularityError("V is singular at y")
    rho = np.asarray(chart.rho(np.linalg.norm(x, axis=-1)))[..., None]
    return d / (rho**2 * d2)


def div_sigma_V(chart: ConformalChart, y, sample: TangentPlaneSample):
    """Tangential divergence of V, as the square-completed expression 2|A|^2 - 2 b^2 |x^perp|^2."""
    x = sample.x
    y = np.asarray(y, dtype=float)
    d = x - y
    D = _dot(d, d)
    if np.any(D <= SINGULAR_GUARD**2):
        raise SingularityError("V is singular at y")
    s = np.linalg.norm(x, axis=-1)
    rho = np.asarray(chart.rho(s))
    b = np.asarray(chart.rho_prime_over_s(s)) / (2 * rho**2)
    xp = sample.perp(x)
    yp = sample.perp(np.broadcast_to(y, x.shape))
    a = 1.0 / (rho * D)
    A = a[..., None] * yp - (a + b)[..., None] * xp
    return scalar_or_array(2 * _dot(A, A) - 2 * b**2 * _dot(xp, xp))


@dataclass
class CalibrationField:
    """A calibration field with a prescribed singularity at the boundary point y.

    For the conformal kind points are chart points; for the sphere-extrinsic
    kind they are points of S^n in R^{n+1} and p is the ball centre. The
    ``radial`` kind is Phi alone (no singularity), built by ``radial_field``.
    """

    kind: str
    geom: RadialGeometry
    R: float
    y: np.ndarray
    chart: ConformalChart | None = None
    p: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.I_R = float(self.geom.I(self.R))
        self.S = self.chart.s_radius(self.R) if self.chart is not None else None

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "sphere-extrinsic":
            return sphere_W(self.R, self.p, self.y, x)
        s = np.linalg.norm(x, axis=-1)
        r = np.asarray(self.chart.r_of_s(s))
        phi_part = np.asarray(self.geom.I_over_h2(r))[..., None] * x
        if self.kind == "radial":
            return phi_part
        return phi_part - 2 * self.I_R * conformal_V(self.chart, self.y, x)

    def div_exact(self, sample: TangentPlaneSample):
        if self.kind == "sphere-extrinsic":
            return _sphere_div(self, sample)
        r = np.asarray(self.chart.r_of_s(sample.s))
        radial = div_sigma_radial(self.geom, r, np.clip(sample.grad_sigma_r_sq, 0, 1))
        if self.kind == "radial":
            return radial
        return scalar_or_array(radial - 2 * self.I_R * np.asarray(div_sigma_V(self.chart, self.y, sample)))

    def bound_form(self, sample: TangentPlaneSample):
        """Upper bound 1 + (*) h^-2 |grad^Sigma r^perp|^2 for div_exact (conformal kind)."""
        r = np.asarray(self.chart.r_of_s(sample.s))
        r = np.minimum(r, self.R)
        small = r < SERIES_RADIUS
        safe = np.where(small, 1.0, r)
        ratio = np.asarray(star_term(self.geom, safe, self.R)) / np.asarray(self.geom.h(safe)) ** 2
        c3 = self.geom.profile.d3h0()
        # (*)/h^2 ~ (-1 + K(0) I(R)) K(0) r^2 / 4 with K(0) = -h'''(0)
        ratio = np.where(small, (-1 - c3 * self.I_R) * (-c3) * r**2 / 4, ratio)
        return 1.0 + ratio * (1.0 - np.clip(sample.grad_sigma_r_sq, 0, 1))

    def radial_component(self, x):
        """<W, grad r>_g on the chart (or <W, grad d_p> on the sphere)."""
        W = self.value(x)
        if self.kind == "sphere-extrinsic":
            return _dot(W, grad_distance_sphere(self.p, x))
        s = np.linalg.norm(x, axis=-1)
        return np.asarray(self.chart.rho(s)) * _dot(W, x) / s

    def norm_g(self, x):
        W = self.value(x)
        if self.kind == "sphere-extrinsic":
            return np.linalg.norm(W, axis=-1)
        return np.asarray(self.chart.rho(np.linalg.norm(x, axis=-1))) * np.linalg.norm(W, axis=-1)


def _sphere_div(field: CalibrationField, sample: TangentPlaneSample):
    # radial-field divergences of Phi_p and Phi_{-y}, with tan^2(d/2) = (1 - c)/(1 + c)
    X, e1, e2 = sample.x, sample.e1, sample.e2
    p, y = field.p, field.y
    cp = _dot(p, X)
    qp = _dot(p, e1) ** 2 + _dot(p, e2) ** 2
    cy = _dot(y, X)
    qy = _dot(y, e1) ** 2 + _dot(y, e2) ** 2
    if np.any(1 - cy <= SINGULAR_GUARD):
        raise SingularityError("W is singular at y")
    div_p = 1 - ((1 - cp) / (1 + cp) - qp / (1 + cp) ** 2)
    div_y = 1 - ((1 + cy) / (1 - cy) - qy / (1 - cy) ** 2)
    cR = math.cos(field.R)
    return scalar_or_array(cR * div_p + (1 - cR) * div_y)


def conformal_W(geom: RadialGeometry, chart: ConformalChart, R, y) -> CalibrationField:
    """W = Phi - 2 I(R) V for a boundary point y with |y| = s(R)."""
    S = chart.s_radius(R)
    if R <= 0 or not S < chart.s_max:
        raise DomainError("need 0 < R and s(R) < s_max")
    y = np.asarray(y, dtype=float)
    if abs(np.linalg.norm(y) - S) > 1e-9 * max(1.0, S):
        raise DomainError(f"|y| = {np.linalg.norm(y)} but s(R) = {S}")
    return CalibrationField("conformal", geom, float(R), y, chart=chart)


def radial_field(geom: RadialGeometry, chart: ConformalChart, R) -> CalibrationField:
    """Phi = phi(r) d/dr on B_R in the chart, with tangential divergence div_sigma_radial."""
    S = chart.s_radius(R)
    y = np.zeros(3)
    y[0] = S
    return CalibrationField("radial", geom, float(R), y, chart=chart)


def sphere_calibration_field(geom: RadialGeometry, R, p, y) -> CalibrationField:
    if not 0 < R <= math.pi / 2 + 1e-12:
        raise DomainError("sphere construction needs 0 < R <= pi/2")
    return CalibrationField("sphere-extrinsic", geom, float(R), np.asarray(y, dtype=float),
                            p=np.asarray(p, dtype=float))


# -- stereographic identification -------------------------------------------


def chart_to_sphere(x):
    """Inverse stereographic map for the chart s = 2 tan(r/2), with p = e_{n+1}."""
    x = np.asarray(x, dtype=float)
    s2 = _dot(x, x)[..., None]
    return np.concatenate([4 * x / (4 + s2), (4 - s2) / (4 + s2)], axis=-1)


def chart_pushforward(x, v):
    """Differential of ``chart_to_sphere`` at x applied to chart vectors v."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    s2 = _dot(x, x)[..., None]
    xv = _dot(x, v)[..., None]
    top = 4 * v / (4 + s2) - 8 * x * xv / (4 + s2) ** 2
    last = -16 * xv / (4 + s2) ** 2
    return np.concatenate([top, last], axis=-1)


# -- finite-difference oracle -------------------------------------------------


def fd_div_oracle(field: CalibrationField, sample: TangentPlaneSample, step, order=8):
    """Tangential g-divergence by finite differences, independent of div_exact.

    With Y = rho^2 W, the euclidean tangential divergence of Y is taken from
    central differences along e1 and e2, and
    div_Sigma W = rho^-2 div_{Sigma,delta} Y + 2 rho'/(s rho^3) <Y, x^perp>.
    """
    if field.kind not in ("conformal", "radial"):
        raise ValueError("the finite-difference oracle works in the conformal chart")
    x = np.asarray(sample.x, dtype=float)
    reach = step * (order // 2)
    dist = np.linalg.norm(x - field.y, axis=-1)
    if field.kind == "conformal" and (np.any(dist < 10 * step) or np.any(dist <= reach)):
        raise SingularityError("sample is within 10 steps of the singular point")
    chart = field.chart

    def Y(z):
        rho = np.asarray(chart.rho(np.linalg.norm(z, axis=-1)))[..., None]
        return rho**2 * field.value(z)

    div_delta = 0.0
    for e in (sample.e1, sample.e2):
        deriv = central_difference(lambda t: Y(x + t * e), 0.0, step, order)
        div_delta = div_delta + _dot(deriv, e)
    s = np.linalg.norm(x, axis=-1)
    rho = np.asarray(chart.rho(s))
    xp = sample.perp(x)
    corr = 2 * np.asarray(chart.rho_prime_over_s(s)) / rho**3 * _dot(Y(x), xp)
    return scalar_or_array(div_delta / rho**2 + corr)


# -- sampling -----------------------------------------------------------------


def sample_tangent_planes(rng, n, S, dim=3, y=None, min_dist=1e-6):
    """x uniform in the chart ball |x| < S, frame from two gaussian vectors."""
    pts = np.empty((0, dim))
    while len(pts) < n:
        cand = rng.uniform(-S, S, size=(2 * (n - len(pts)) + 8, dim))
        keep = np.linalg.norm(cand, axis=-1) < S
        if y is not None:
            keep &= np.linalg.norm(cand - y, axis=-1) >= min_dist
        pts = np.concatenate([pts, cand[keep]])
    x = pts[:n]
    e1, e2 = orthonormal_frame(rng.standard_normal((n, dim)), rng.standard_normal((n, dim)))
    return TangentPlaneSample(x, e1, e2)


def sample_boundary_points(rng, n, S, dim=3, y=None, min_dist=1e-6):
    pts = np.empty((0, dim))
    while len(pts) < n:
        u = rng.standard_normal((n - len(pts) + 8, dim))
        u = S * u / np.linalg.norm(u, axis=-1, keepdims=True)
        if y is not None:
            u = u[np.linalg.norm(u - y, axis=-1) >= min_dist]
        pts = np.concatenate([pts, u])
    return pts[:n]


def default_threads():
    return max(1, int(os.environ.get("FREEBOUND_THREADS", "1")))


def _chunked(n, seed, work, threads):
    # per-chunk seeds come from the chunk counter, so results do not depend on threads
    sizes = [min(CHUNK, n - k) for k in range(0, n, CHUNK)]
    jobs = [(np.random.default_rng([seed, i]), m) for i, m in enumerate(sizes)]
    if threads <= 1:
        return [work(rng, m) for rng, m in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: work(*job), jobs))


@dataclass
class FieldCheckSummary:
    samples: int
    max_div: float
    max_bound_form_gap: float
    tangency_samples: int
    max_tangency_residual: float
    oracle_samples: int
    oracle_max_rel_err: float
    per_sample: np.ndarray | None = None


def field_check(field: CalibrationField, samples=100_000, seed=0, oracle_samples=None,
                tangency_samples=1000, step_rel=1e-4, threads=None, keep_samples=False):
    """Monte-Carlo sweep: max div_exact, tangency residual and oracle agreement."""
    if field.kind != "conformal":
        raise ValueError("field_check runs on the conformal construction")
    threads = threads or default_threads()
    S = field.S
    dim = field.y.shape[-1]
    step = step_rel * S
    oracle_samples = samples if oracle_samples is None else oracle_samples

    def div_work(rng, m):
        smp = sample_tangent_planes(rng, m, S, dim, field.y, min_dist=1e-6)
        div = np.asarray(field.div_exact(smp))
        gap = div - field.bound_form(smp)
        return div, gap, smp.x

    parts = _chunked(samples, seed, div_work, threads) or [(np.full(1, -np.inf), np.full(1, -np.inf), np.zeros((0, dim)))]
    div = np.concatenate([p[0] for p in parts])
    gap = np.concatenate([p[1] for p in parts])

    def oracle_work(rng, m):
        smp = sample_tangent_planes(rng, m, S, dim, field.y, min_dist=12 * step)
        exact = np.asarray(field.div_exact(smp))
        fd = np.asarray(fd_div_oracle(field, smp, step))
        return np.abs(exact - fd) / np.maximum(1.0, np.abs(exact))

    errs = np.concatenate(_chunked(oracle_samples, seed + 1, oracle_work, threads)) if oracle_samples else np.zeros(1)

    def tangency_work(rng, m):
        x = sample_boundary_points(rng, m, S, dim, field.y)
        return np.abs(field.radial_component(x)) / field.norm_g(x)

    tang = np.concatenate(_chunked(tangency_samples, seed + 2, tangency_work, threads)) if tangency_samples else np.zeros(1)

    per = None
    if keep_samples:
        xs = np.concatenate([p[2] for p in parts])
        per = np.column_stack([xs, div, gap])
    return FieldCheckSummary(samples, float(div.max()), float(gap.max()), tangency_samples,
                             float(tang.max()), oracle_samples, float(errs.max()), per)


# -- singular flux ------------------------------------------------------------


def singular_flux_check(field: CalibrationField, eps_list, n_planes=8, n_arc=64):
    """Ratio <W, -grad d_y> pi eps / |B_R^2| on half-circles of radius eps about y.

    The half-circles lie in planes containing the radial direction at y, on the
    inner side of the ball. Returns a list of (eps, mean ratio) pairs.
    """
    area = 2 * math.pi * field.I_R
    theta = -math.pi / 2 + math.pi * (np.arange(n_arc) + 0.5) / n_arc
    out = []
    for eps in eps_list:
        if field.kind == "sphere-extrinsic":
            ratios = _sphere_flux_ratios(field, eps, theta, n_planes)
        else:
            ratios = _chart_flux_ratios(field, eps, theta, n_planes)
        out.append((float(eps), float(np.mean(ratios * math.pi * eps / area))))
    return out


def _tangent_directions(normal, n_planes):
    # n_planes unit vectors orthogonal to ``normal``, spread around it
    dim = normal.shape[0]
    basis = np.linalg.svd(normal[None, :])[2][1:]
    if dim == 2:
        return np.array([basis[0], -basis[0]][: max(1, min(2, n_planes))])
    ang = 2 * math.pi * np.arange(n_planes) / n_planes
    return np.cos(ang)[:, None] * basis[0] + np.sin(ang)[:, None] * basis[1]


def _chart_flux_ratios(field, eps, theta, n_planes):
    S = field.S
    y = field.y
    yhat = y / S
    eps_c = eps / float(field.chart.rho(S))
    vals = []
    for w in _tangent_directions(yhat, n_planes):
        u = np.cos(theta)[:, None] * (-yhat) + np.sin(theta)[:, None] * w
        x = y + eps_c * u
        W = field.value(x)
        rho = np.asarray(field.chart.rho(np.linalg.norm(x, axis=-1)))
        vals.append(-rho * _dot(W, u))  # <W, -grad d_y>_g with grad d_y = u/rho
    return np.concatenate(vals)


def _sphere_flux_ratios(field, eps, theta, n_planes):
    Y = field.y
    nu = grad_distance_sphere(field.p, Y)  # outward normal of the ball at y
    # directions tangent to both S^n and the boundary sphere at Y
    plane = []
    for t in _tangent_directions(Y, 64):
        t = t - np.dot(t, nu) * nu
        if np.linalg.norm(t) > 0.5:
            plane.append(t / np.linalg.norm(t))
        if len(plane) == n_planes:
            break
    vals = []
    for t in plane:
        w = np.cos(theta)[:, None] * (-nu) + np.sin(theta)[:, None] * t
        X = math.cos(eps) * Y + math.sin(eps) * w
        W = field.value(X)
        toward_y = (Y - math.cos(eps) * X) / math.sin(eps)
        vals.append(_dot(W, toward_y))
    return np.concatenate(vals)
