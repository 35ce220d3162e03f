"""Admissible radius: the largest R with (*)(r, R) <= 0 for all r in (0, R]."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect, brentq, minimize_scalar

from ._numerics import central_difference
from .fields import star_term
from .radial import ConformalChart, RadialGeometry, build_chart
from .errors import DomainError, NumericError

GAUSSIAN_ROOT_PAPER = 1.546


def star_max(geom: RadialGeometry, R, grid_n=2000):
    """Max of (*)(r, R) over r in (0, R]: grid search plus one bounded refinement."""
    R = float(R)
    r = np.linspace(R / grid_n, R, grid_n)
    vals = np.asarray(star_term(geom, r, R))
    k = int(np.argmax(vals))
    best = float(vals[k])
    lo = r[k - 1] if k > 0 else 0.5 * r[0]
    hi = r[min(k + 1, grid_n - 1)]
    if hi > lo:
        res = minimize_scalar(lambda t: -float(star_term(geom, t, R)), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12 * max(1.0, R)})
        best = max(best, -float(res.fun))
    return best


def _argmax_star(geom, R, grid_n):
    # (*) vanishes to fourth order at r = 0 for every R; normalising by r^4
    # picks out the radius where the bound actually binds
    r = np.linspace(R / grid_n, R, grid_n)
    vals = np.asarray(star_term(geom, r, R)) / r**4
    return float(r[int(np.argmax(vals))])


@dataclass
class ThresholdReport:
    R_bar: float
    S_bar: float
    binding_r: float
    grid_n: int
    certificate_below: float
    certificate_above: float | None
    identically_zero: bool = False
    at_domain_bound: bool = False
    diagonal_root_geodesic: float | None = None
    diagonal_root_chart: float | None = None


def find_R_bar(geom: RadialGeometry, tol=1e-10, grid_n=2000, chart: ConformalChart | None = None,
               cap=1e3) -> ThresholdReport:
    """Largest R such that star_max(R) <= 0, by bracket doubling and bisection."""
    profile = geom.profile
    chart = chart or build_chart(profile)
    r_bar = profile.r_max
    top = r_bar * (1 - 1e-9) if math.isfinite(r_bar) else cap
    ok = lambda R: star_max(geom, R, grid_n) <= 0.0

    R = min(r_bar / 2, 1.0)
    if not ok(R):
        # shrink until admissible
        for _ in range(60):
            R /= 2
            if ok(R):
                break
        else:
            raise NumericError("no admissible radius found at this grid resolution")
        lo, hi = R, 2 * R
    else:
        lo = R
        hi = None
        while hi is None:
            nxt = min(2 * lo, top)
            if not ok(nxt):
                hi = nxt
            elif nxt >= top:
                lo = nxt
                break
            else:
                lo = nxt

    if hi is None:
        zero = all(float(np.max(np.abs(star_term(geom, np.linspace(0, R_, 64), R_)))) == 0.0
                   for R_ in (0.5, 1.0, lo))
        R_bar = r_bar if zero else lo
        S_bar = math.inf if not math.isfinite(R_bar) else float(chart.s_of_r(min(R_bar, top)))
        return ThresholdReport(R_bar, S_bar, float("nan") if zero else lo, grid_n,
                               0.0 if zero else star_max(geom, lo, grid_n), None,
                               identically_zero=zero, at_domain_bound=True)

    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, lo):
            break
    R_bar = lo
    below = star_max(geom, R_bar * (1 - 1e-3), grid_n)
    above_R = R_bar * (1 + 1e-3)
    above = star_max(geom, above_R, grid_n) if above_R < r_bar else None
    diag = diagonal_root(geom, R_bar)
    return ThresholdReport(R_bar, float(chart.s_of_r(R_bar)), _argmax_star(geom, R_bar, grid_n),
                           grid_n, below, above,
                           diagonal_root_geodesic=diag,
                           diagonal_root_chart=None if diag is None else float(chart.s_of_r(diag)))


def diagonal_root(geom: RadialGeometry, near):
    """Root of (*)(R, R) = 0 near ``near`` (None when no sign change is bracketed)."""
    f = lambda R: float(star_term(geom, R, R))
    top = geom.profile.r_max
    lo, hi = 0.5 * near, min(1.5 * near, top * (1 - 1e-9))
    try:
        if f(lo) * f(hi) < 0:
            return brentq(f, lo, hi, xtol=1e-14)
    except DomainError:
        pass
    return None


def gaussian_root_function(r):
    r = np.asarray(r, dtype=float)
    return 8 + r**4 - np.exp(r**2 / 2) * (8 - 4 * r**2 + r**4)


def gaussian_root_reference() -> float:
    """Positive root of 8 + r^4 - exp(r^2/2)(8 - 4r^2 + r^4), bracketed in [1, 2]."""
    return bisect(gaussian_root_function, 1.0, 2.0, xtol=1e-12)


def conformal_scalar_curvature(chart: ConformalChart, s, n=3):
    """Scalar curvature of rho^2 delta in dimension n at chart radius s.

    With f = log rho, Scal = rho^-2 (-2(n-1) lap f - (n-2)(n-1)|grad f|^2);
    rho'' comes from a central difference of rho'.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(s >= chart.s_max):
        raise DomainError("chart radius outside the chart")
    rho = np.asarray(chart.rho(s))
    # rho' is odd; reflect below the origin
    odd_rho_prime = lambda t: np.sign(t) * np.asarray(chart.rho_prime(np.abs(t)))
    rho2 = central_difference(odd_rho_prime, s, 1e-3 * (1 + s), order=6)
    f1 = np.asarray(chart.rho_prime(s)) / rho
    f2 = rho2 / rho - f1**2
    # f'/s at the origin tends to f''(0)
    f1_over_s = np.where(s > 1e-3, f1 / np.where(s > 1e-3, s, 1.0), f2)
    lap = f2 + (n - 1) * f1_over_s
    scal = (-2 * (n - 1) * lap - (n - 2) * (n - 1) * f1**2) / rho**2
    return float(scal) if scal.ndim == 0 else scal


def scalar_curvature_sign_change(chart: ConformalChart, lo=1.0, hi=8.0, n=3):
    """Chart radius where the scalar curvature changes sign (brentq)."""
    return brentq(lambda s: conformal_scalar_curvature(chart, s, n), lo, hi, xtol=1e-13)


@dataclass
class GaussianCrossCheck:
    """The three numbers compared for the self-shrinker metric.

    ``reference_root`` is the root of 8 + r^4 - e^{r^2/2}(8 - 4r^2 + r^4).
    With rho = exp(-s^2/8), (*)(S, S) = 0 reduces to the same polynomial in
    w = S^2/2, i.e. S = sqrt(2) * reference_root in this chart.
    """

    solver_R_geodesic: float
    solver_S_chart: float
    reference_root: float
    reference_root_as_chart_radius: float
    diagonal_root_chart: float | None


def gaussian_cross_check(report: ThresholdReport) -> GaussianCrossCheck:
    root = gaussian_root_reference()
    return GaussianCrossCheck(report.R_bar, report.S_bar, root, math.sqrt(2) * root,
                              report.diagonal_root_chart)
