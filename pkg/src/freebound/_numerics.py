"""Small numerical helpers: tabulated cumulative quadrature and stable special forms."""

import numpy as np
from scipy.interpolate import PchipInterpolator

_GL_ORDER = 16
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)


def gauss_legendre(f, a, b):
    """Integrate f over [a, b] elementwise with a fixed 16-point Gauss rule.

    a and b broadcast against each other; f must accept arrays.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    t = mid[..., None] + half[..., None] * _GL_NODES
    return half * np.sum(_GL_WEIGHTS * f(t), axis=-1)


class CumulativeQuad:
    """F(x) = integral of f from a to x, tabulated on uniform cells.

    Evaluation adds a Gauss-Legendre integral over the partial cell, so the
    result is accurate to the Gauss rule on each cell rather than to an
    interpolant of the table.
    """

    def __init__(self, f, a, b, cells=1024):
        self.f = f
        self.a = float(a)
        self.b = float(b)
        self.edges = np.linspace(self.a, self.b, cells + 1)
        cell = gauss_legendre(f, self.edges[:-1], self.edges[1:])
        self.table = np.concatenate([[0.0], np.cumsum(cell)])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, len(self.edges) - 2)
        return self.table[k] + gauss_legendre(self.f, self.edges[k], x)


def monotone_inverse(forward, derivative, x_table, y_table, newton_steps=2):
    """Return y -> x inverting an increasing forward map.

    A PCHIP interpolant of the table gives the starting point and Newton steps
    against the exact forward map polish it.
    """
    interp = PchipInterpolator(y_table, x_table, extrapolate=True)

    def inverse(y):
        y = np.asarray(y, dtype=float)
        x = interp(y)
        for _ in range(newton_steps):
            d = derivative(x)
            step = np.where(d > 0, (forward(x) - y) / np.where(d > 0, d, 1.0), 0.0)
            x = x - step
        return x

    return inverse


def expm1_minus_linear(u):
    """exp(-u) - 1 + u without cancellation for small u."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 0.1
    us = np.where(small, u, 0.0)
    series = np.zeros_like(us)
    term = np.ones_like(us)
    for k in range(1, 14):
        term = term * (-us) / k
        if k >= 2:
            series = series + term
    direct = np.expm1(-np.where(small, 0.0, u)) + np.where(small, 0.0, u)
    return np.where(small, series, direct)


def scalar_or_array(x):
    """Unwrap 0-d arrays into Python floats."""
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def central_difference(f, x, step, order=8):
    """Central finite-difference derivative of f at x with an even-order stencil."""
    coeffs = {
        2: [1 / 2],
        4: [2 / 3, -1 / 12],
        6: [3 / 4, -3 / 20, 1 / 60],
        8: [4 / 5, -1 / 5, 4 / 105, -1 / 280],
    }[order]
    total = 0.0
    for k, c in enumerate(coeffs, start=1):
        total = total + c * (f(x + k * step) - f(x - k * step))
    return total / step
