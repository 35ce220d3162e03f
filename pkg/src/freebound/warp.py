"""Rotationally symmetric ambient metrics g = dr^2 + h(r)^2 g_S.

A metric is carried by its warping function h together with h' and h''. The
same metric may equivalently be described in conformal coordinates as
g = rho(s)^2 delta, with h(r) = s rho(s) and dr/ds = rho; profiles built from a
conformal factor keep both descriptions.

Presets carry closed forms (in ``WarpProfile.closed``) for the radial
potentials and the conformal chart so that downstream modules can bypass
quadrature; the generic quadrature paths are kept and tested against them.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import erf, erfinv, exprel

from ._numerics import CumulativeQuad, expm1_minus_linear, monotone_inverse, scalar_or_array
from .errors import DomainError, NormalizationError

PRESETS = ("euclidean", "sphere", "gaussian-shrinker")

# below this radius ratios such as h(r)/r are taken from Taylor series
SERIES_RADIUS = 1e-3


@dataclass(frozen=True)
class WarpProfile:
    """Warping function h with its first two derivatives on [0, r_max)."""

    name: str
    h: Callable
    dh: Callable
    d2h: Callable
    r_max: float
    source: str  # "preset", "conformal" or "table"
    d3h: Callable | None = None
    closed: Mapping[str, Callable] = field(default_factory=dict)
    degenerate_c2: bool = False

    def d3h0(self) -> float:
        """h'''(0), exact when available, else Richardson-extrapolated from h''.

        h'' is odd in r, so h''(d)/d is the symmetric difference quotient.
        """
        if self.d3h is not None:
            return float(self.d3h(0.0))
        d = 1e-3 * min(1.0, self.r_max / 10)
        q1 = float(self.d2h(d)) / d
        q2 = float(self.d2h(2 * d)) / (2 * d)
        return (4 * q1 - q2) / 3

    def check_domain(self, r, allow_end=False):
        r = np.asarray(r, dtype=float)
        bad = (r < 0) | (r > self.r_max if allow_end else r >= self.r_max) | ~np.isfinite(r)
        if np.any(bad):
            raise DomainError(f"radius outside [0, {self.r_max}) for profile {self.name!r}")
        return r


def _euclidean() -> WarpProfile:
    one = lambda x: np.ones_like(np.asarray(x, dtype=float))
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    ident = lambda x: np.asarray(x, dtype=float) * 1.0
    closed = {
        "I": lambda r: 0.5 * np.asarray(r, dtype=float) ** 2,
        "J": zero,
        "I_over_h2": lambda r: 0.5 * one(r),
        "s_of_r": ident,
        "r_of_s": ident,
        "rho": one,
        "rho_prime": zero,
        "rho_second": zero,
    }
    return WarpProfile("euclidean", ident, one, zero, math.inf, "preset",
                       d3h=zero, closed=closed, degenerate_c2=True)


def _sphere() -> WarpProfile:
    def I(r):
        return 2.0 * np.sin(0.5 * np.asarray(r, dtype=float)) ** 2

    def rho(s):
        return 1.0 / (1.0 + 0.25 * np.asarray(s, dtype=float) ** 2)

    def rho_prime(s):
        s = np.asarray(s, dtype=float)
        return -0.5 * s * rho(s) ** 2

    def rho_second(s):
        s = np.asarray(s, dtype=float)
        p = rho(s)
        return -0.5 * p**2 + 0.5 * s**2 * p**3

    closed = {
        "I": I,
        "J": lambda r: -I(r) ** 2,
        "I_over_h2": lambda r: 1.0 / (1.0 + np.cos(np.asarray(r, dtype=float))),
        "s_of_r": lambda r: 2.0 * np.tan(0.5 * np.asarray(r, dtype=float)),
        "r_of_s": lambda s: 2.0 * np.arctan(0.5 * np.asarray(s, dtype=float)),
        "rho": rho,
        "rho_prime": rho_prime,
        "rho_second": rho_second,
    }
    return WarpProfile("sphere", np.sin, np.cos, lambda r: -np.sin(r), math.pi, "preset",
                       d3h=lambda r: -np.cos(r), closed=closed)


_SQRT_2PI = math.sqrt(2 * math.pi)
_TWO_SQRT2 = 2 * math.sqrt(2)


def _gaussian_shrinker() -> WarpProfile:
    """g = exp(-|x|^2/4) delta, i.e. rho(s) = exp(-s^2/8)."""

    def rho(s):
        return np.exp(-np.asarray(s, dtype=float) ** 2 / 8)

    def rho_prime(s):
        s = np.asarray(s, dtype=float)
        return -0.25 * s * rho(s)

    def rho_second(s):
        s = np.asarray(s, dtype=float)
        return (s**2 / 16 - 0.25) * rho(s)

    def r_of_s(s):
        return _SQRT_2PI * erf(np.asarray(s, dtype=float) / _TWO_SQRT2)

    def s_of_r(r):
        return _TWO_SQRT2 * erfinv(np.asarray(r, dtype=float) / _SQRT_2PI)

    def u_of_r(r):
        return s_of_r(r) ** 2 / 4

    closed = {
        "I": lambda r: -2.0 * np.expm1(-u_of_r(r)),
        "J": lambda r: -4.0 * expm1_minus_linear(u_of_r(r)),
        "I_over_h2": lambda r: 0.5 * exprel(u_of_r(r)),
        "s_of_r": s_of_r,
        "r_of_s": r_of_s,
        "rho": rho,
        "rho_prime": rho_prime,
        "rho_second": rho_second,
    }

    def h(r):
        s = s_of_r(r)
        return s * rho(s)

    def dh(r):
        return 1.0 - s_of_r(r) ** 2 / 4

    def d2h(r):
        s = s_of_r(r)
        return -s / (2 * rho(s))

    def d3h(r):
        s = s_of_r(r)
        return -(1 + s**2 / 4) / (2 * rho(s) ** 2)

    return WarpProfile("gaussian-shrinker", h, dh, d2h, _SQRT_2PI, "conformal",
                       d3h=d3h, closed=closed)


def make_preset(name: str) -> WarpProfile:
    """Return one of the built-in metrics: euclidean, sphere or gaussian-shrinker."""
    builders = {
        "euclidean": _euclidean,
        "sphere": _sphere,
        "gaussian-shrinker": _gaussian_shrinker,
    }
    try:
        return builders[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; expected one of {PRESETS}") from None


def from_conformal_factor(rho, rho_prime, rho_second=None, s_max=math.inf,
                          name="conformal", s_cap=16.0, cells=2048, tol=1e-10):
    """Profile of g = rho(s)^2 delta written as dr^2 + h(r)^2 g_S.

    The chart map r(s) = int_0^s rho is tabulated and inverted; h = s rho(s)
    and its r-derivatives follow from the chain rule through dr/ds = rho.
    When ``rho_second`` is omitted it is taken from central differences of
    ``rho_prime``.
    """
    if abs(float(rho(0.0)) - 1.0) > tol:
        raise NormalizationError(f"rho(0) = {float(rho(0.0))!r}, expected 1")
    s_end = float(s_max) if math.isfinite(s_max) else float(s_cap)
    probe = np.linspace(0.0, s_end, 4097)
    if np.any(~(np.asarray(rho(probe)) > 0)):
        raise DomainError("conformal factor must be positive on its domain")

    if rho_second is None:
        def rho_second(s):
            s = np.asarray(s, dtype=float)
            d = 1e-5 * (1 + np.abs(s))
            return (np.asarray(rho_prime(s + d)) - np.asarray(rho_prime(s - d))) / (2 * d)

    r_of_s = CumulativeQuad(rho, 0.0, s_end, cells)
    # drop the tail where rho has decayed below the resolution of the table
    inc = np.diff(r_of_s.table) > 1e-14 * max(1.0, r_of_s.table[-1])
    stop = len(inc) if inc.all() else int(np.argmin(inc))
    s_table = r_of_s.edges[: stop + 1]
    r_table = r_of_s.table[: stop + 1]
    s_of_r = monotone_inverse(r_of_s, rho, s_table, r_table)
    r_max = float(r_table[-1])

    def h(r):
        s = s_of_r(r)
        return s * rho(s)

    def dh(r):
        s = s_of_r(r)
        return 1.0 + s * rho_prime(s) / rho(s)

    def d2h(r):
        s = s_of_r(r)
        p = rho(s)
        q = rho_prime(s) / p
        return (q + s * (rho_second(s) / p - q**2)) / p

    closed = {
        "s_of_r": s_of_r,
        "r_of_s": r_of_s,
        "rho": rho,
        "rho_prime": rho_prime,
        "rho_second": rho_second,
    }
    return WarpProfile(name, h, dh, d2h, r_max, "conformal", closed=closed)


def from_table(r, h, name="table"):
    """Tabulated warping function, interpolated by a C^2 cubic spline.

    The spline is clamped to h''(0) = 0 at the origin; h'' is the analytic
    second derivative of the spline.
    """
    r = np.asarray(r, dtype=float)
    h = np.asarray(h, dtype=float)
    if r[0] != 0.0:
        r = np.concatenate([[0.0], r])
        h = np.concatenate([[0.0], h])
    if np.any(np.diff(r) <= 0):
        raise ValueError("radii must be strictly increasing")
    spline = CubicSpline(r, h, bc_type=((2, 0.0), "not-a-knot"))
    return WarpProfile(name, spline, spline.derivative(1), spline.derivative(2),
                       float(r[-1]), "table", d3h=spline.derivative(3))


def conformal_from_table(s, rho, name="table-conformal"):
    """Tabulated conformal factor, splined with rho'(0) = 0."""
    s = np.asarray(s, dtype=float)
    rho = np.asarray(rho, dtype=float)
    spline = CubicSpline(s, rho, bc_type=((1, 0.0), "not-a-knot"))
    return from_conformal_factor(spline, spline.derivative(1), spline.derivative(2),
                                 s_max=float(s[-1]), name=name)


def _read_two_columns(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [c.strip() for c in next(reader)]
        rows = [(float(a), float(b)) for a, b in reader if a.strip()]
    cols = np.array(rows, dtype=float)
    return header, cols[:, 0], cols[:, 1]


def load_profile_csv(path):
    header, x, y = _read_two_columns(path)
    if header == ["r", "h"]:
        return from_table(x, y, name=Path(path).stem)
    if header == ["s", "rho"]:
        return conformal_from_table(x, y, name=Path(path).stem)
    raise ValueError(f"{path}: header must be 'r,h' or 's,rho', got {','.join(header)}")


def load_metric_config(path):
    """Load a metric from a ``key = value`` config file.

    Recognised keys: ``kind`` (warp or conformal), and either ``preset`` (a
    preset name) or ``table`` (a two-column CSV path, relative to the config).
    """
    path = Path(path)
    conf = {}
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}: malformed line {raw!r}")
        conf[key.strip()] = value.strip()
    kind = conf.get("kind", "warp")
    if kind not in ("warp", "conformal"):
        raise ValueError(f"{path}: kind must be warp or conformal")
    if "preset" in conf:
        return make_preset(conf["preset"])
    if "table" not in conf:
        raise ValueError(f"{path}: need 'preset' or 'table'")
    table = path.parent / conf["table"]
    header, x, y = _read_two_columns(table)
    if kind == "warp":
        if header != ["r", "h"]:
            raise ValueError(f"{table}: warp tables need header r,h")
        return from_table(x, y, name=table.stem)
    if header != ["s", "rho"]:
        raise ValueError(f"{table}: conformal tables need header s,rho")
    return conformal_from_table(x, y, name=table.stem)


def resolve_metric(source: str) -> WarpProfile:
    """Preset name, metric config file, or two-column CSV table."""
    if source in PRESETS:
        return make_preset(source)
    p = Path(source)
    if not p.exists():
        raise ValueError(f"unknown metric {source!r}")
    if p.suffix == ".csv":
        return load_profile_csv(p)
    return load_metric_config(p)


@dataclass
class AdmissibilityReport:
    h0_ok: bool
    dh0_ok: bool
    d2h0_ok: bool
    c2_ok: bool
    min_K: float
    degenerate: bool
    failures: list

    @property
    def c1_ok(self) -> bool:
        return self.h0_ok and self.dh0_ok and self.d2h0_ok

    @property
    def passed(self) -> bool:
        return self.c1_ok and self.c2_ok


def check_admissibility(profile: WarpProfile, grid, tol=1e-8) -> AdmissibilityReport:
    """Check (C1) at the origin and K > 0 on a grid of radii."""
    grid = profile.check_domain(np.atleast_1d(np.asarray(grid, dtype=float)))
    failures = []
    h0 = abs(float(profile.h(0.0))) <= tol
    dh0 = abs(float(profile.dh(0.0)) - 1.0) <= tol
    d2h0 = abs(float(profile.d2h(0.0))) <= tol
    for ok, label in ((h0, "h(0) != 0"), (dh0, "h'(0) != 1"), (d2h0, "h''(0) != 0")):
        if not ok:
            failures.append(f"(C1) {label}")
    K = np.atleast_1d(curvature_K(profile, grid))
    min_K = float(np.min(K))
    c2 = bool(np.all(K > 0))
    if not c2:
        failures.append(f"(C2) K not strictly positive, min K = {min_K:.3g}")
    return AdmissibilityReport(h0, dh0, d2h0, c2, min_K, profile.degenerate_c2, failures)


def curvature_K(profile: WarpProfile, r):
    """Radial sectional curvature -h''/h; at r = 0 the limit -h'''(0)."""
    r = profile.check_domain(r)
    safe = np.where(r > 0, r, 1.0)
    K = -np.asarray(profile.d2h(safe), dtype=float) / np.asarray(profile.h(safe), dtype=float)
    K = np.where(r > 0, K, -profile.d3h0())
    return scalar_or_array(K)
