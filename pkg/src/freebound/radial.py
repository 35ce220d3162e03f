"""Radial potentials I, phi, J and the conformal chart of a warped metric."""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._numerics import CumulativeQuad, monotone_inverse, scalar_or_array
from .errors import DomainError, NormalizationError
from .warp import SERIES_RADIUS, WarpProfile

_CHART_KEYS = ("s_of_r", "r_of_s", "rho", "rho_prime")


def _finite_cap(profile: WarpProfile, cap=50.0):
    return profile.r_max if math.isfinite(profile.r_max) else cap


@dataclass
class RadialGeometry:
    """I(r) = int_0^r h, phi = I/h, J(r) = 2 int_0^r I h'' and disk areas 2 pi I(R).

    Closed forms attached to the profile are used when ``use_closed`` is set;
    otherwise every potential comes from tabulated Gauss-Legendre quadrature.
    """

    profile: WarpProfile
    use_closed: bool = True
    cells: int = 2048
    _I: Callable = field(init=False, repr=False)
    _J: Callable = field(init=False, repr=False)

    def __post_init__(self):
        p = self.profile
        closed = p.closed if self.use_closed else {}
        if "I" in closed:
            self._I = closed["I"]
        else:
            self._I = CumulativeQuad(p.h, 0.0, _finite_cap(p), self.cells)
        if "J" in closed:
            self._J = closed["J"]
        else:
            I = self._I
            integrand = lambda t: 2.0 * np.asarray(I(t)) * np.asarray(p.d2h(t))
            self._J = CumulativeQuad(integrand, 0.0, _finite_cap(p), self.cells)
        self._c3 = p.d3h0()
        self._I_over_h2 = closed.get("I_over_h2")

    def h(self, r):
        return self.profile.h(r)

    def I(self, r):
        r = self.profile.check_domain(r)
        return scalar_or_array(self._I(r))

    def J(self, r):
        r = self.profile.check_domain(r)
        return scalar_or_array(self._J(r))

    def phi(self, r):
        r = self.profile.check_domain(r)
        small = r < SERIES_RADIUS
        safe = np.where(small, 1.0, r)
        direct = np.asarray(self._I(safe)) / np.asarray(self.profile.h(safe))
        series = r / 2 - self._c3 * r**3 / 24
        return scalar_or_array(np.where(small, series, direct))

    def I_over_h2(self, r):
        """phi/h = I/h^2, the chart-component coefficient of Phi (finite at 0)."""
        r = self.profile.check_domain(r)
        small = r < SERIES_RADIUS
        safe = np.where(small, 1.0, r)
        if self._I_over_h2 is not None:
            direct = np.asarray(self._I_over_h2(safe))
        else:
            direct = np.asarray(self._I(safe)) / np.asarray(self.profile.h(safe)) ** 2
        series = 0.5 - self._c3 * r**2 / 8
        return scalar_or_array(np.where(small, series, direct))

    def disk_area(self, R):
        R = self.profile.check_domain(R)
        if np.any(R <= 0):
            raise DomainError("disk radius must be positive")
        return scalar_or_array(2 * math.pi * np.asarray(self._I(R)))


def integral_I(geom: RadialGeometry, r):
    return geom.I(r)


def phi(geom: RadialGeometry, r):
    return geom.phi(r)


def disk_area(geom: RadialGeometry, R):
    return geom.disk_area(R)


def J_integral(geom: RadialGeometry, r):
    return geom.J(r)


@dataclass
class ConformalChart:
    """Diffeomorphism r <-> s with g = rho(s)^2 delta and h(r) = s rho(s)."""

    profile: WarpProfile
    s_of_r: Callable
    r_of_s: Callable
    rho: Callable
    rho_prime: Callable
    rho_second: Callable
    s_max: float

    def rho_prime_over_s(self, s):
        """rho'(s)/s, continuous at the origin where it equals rho''(0) = h'''(0)/2."""
        s = np.asarray(s, dtype=float)
        small = s < SERIES_RADIUS
        safe = np.where(small, 1.0, s)
        direct = np.asarray(self.rho_prime(safe)) / safe
        series = 0.5 * self.profile.d3h0() * np.asarray(self.rho(s))
        return np.where(small, series, direct)

    def s_radius(self, R):
        """Chart radius s(R) of the geodesic ball B_R."""
        return float(self.s_of_r(self.profile.check_domain(R)))


def build_chart(profile: WarpProfile, s_grid_resolution=2048, use_closed=True) -> ConformalChart:
    """Conformal chart solving ds/dr = s/h with s(0) = 0.

    Without closed forms the singular ODE is integrated as
    s(r) = r exp(int_0^r (1/h - 1/t) dt), whose integrand is bounded at 0.
    """
    closed = profile.closed if use_closed else {}
    if all(k in closed for k in _CHART_KEYS):
        rho_second = closed.get("rho_second") or _fd_derivative(closed["rho_prime"])
        s_max = math.inf
        if math.isfinite(profile.r_max):
            with np.errstate(all="ignore"):
                s_end = float(closed["s_of_r"](profile.r_max))
            if math.isfinite(s_end) and s_end < 1e15:
                s_max = s_end
        return ConformalChart(profile, closed["s_of_r"], closed["r_of_s"], closed["rho"],
                              closed["rho_prime"], rho_second, s_max)

    if abs(float(profile.h(0.0))) > 1e-8 or abs(float(profile.dh(0.0)) - 1.0) > 1e-8:
        raise NormalizationError("chart needs h(0) = 0 and h'(0) = 1")

    c = profile.d3h0() / 6  # h = t + c t^3 + ...

    def log_ratio_integrand(t):
        t = np.asarray(t, dtype=float)
        small = t < SERIES_RADIUS
        safe = np.where(small, 1.0, t)
        direct = 1.0 / np.asarray(profile.h(safe)) - 1.0 / safe
        return np.where(small, -c * t + c * c * t**3, direct)

    r_cap = profile.r_max * (1 - 1e-3) if math.isfinite(profile.r_max) else 50.0
    G = CumulativeQuad(log_ratio_integrand, 0.0, r_cap, s_grid_resolution)

    def s_of_r(r):
        r = np.asarray(r, dtype=float)
        return r * np.exp(G(r))

    r_table = G.edges
    s_table = s_of_r(r_table)

    def dsdr(r):
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, s_of_r(safe) / np.asarray(profile.h(safe)), 1.0)

    r_of_s = monotone_inverse(s_of_r, dsdr, r_table, s_table)

    def rho(s):
        s = np.asarray(s, dtype=float)
        safe = np.where(s > 0, s, 1.0)
        return np.where(s > 0, np.asarray(profile.h(r_of_s(safe))) / safe, 1.0)

    def rho_prime(s):
        s = np.asarray(s, dtype=float)
        small = s < SERIES_RADIUS
        safe = np.where(small, 1.0, s)
        direct = rho(safe) * (np.asarray(profile.dh(r_of_s(safe))) - 1.0) / safe
        return np.where(small, 3 * c * s * rho(s), direct)

    return ConformalChart(profile, s_of_r, r_of_s, rho, rho_prime,
                          _fd_derivative(rho_prime), float(s_table[-1]))


def _fd_derivative(f):
    """Central difference of an even function's odd derivative (reflected at 0)."""

    def df(s):
        s = np.asarray(s, dtype=float)
        d = 1e-5 * (1 + np.abs(s))
        lo = s - d
        f_lo = np.where(lo >= 0, np.asarray(f(np.abs(lo))), -np.asarray(f(np.abs(lo))))
        return (np.asarray(f(s + d)) - f_lo) / (2 * d)

    return df
