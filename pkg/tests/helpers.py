"""Shared test fixtures: analytic losses with located minima and chart sweeps."""

import numpy as np

from repgeo import charts
from repgeo.calculus import DomainBox, ScalarField
from repgeo.dynamics import newton_minimize

_A = np.array([[3.0, 1.0], [1.0, 2.0]])
_C = np.array([0.4, -0.3])
_X = np.array([[1.0, 0.5], [-0.3, 1.2], [0.8, -0.7], [-1.1, -0.4], [0.2, 0.9], [1.5, 0.3]])
_Y = np.array([1.0, 0.0, 1.0, 0.0, 1.0, 1.0])


def _logistic(t):
    z = _X @ t
    return np.sum(np.logaddexp(0.0, z) - _Y * z) + 0.5 * np.sum(t * t)


TEST_LOSSES = {
    "quadratic": (ScalarField(lambda t: 0.5 * (t - _C) @ (_A @ (t - _C)), 2, name="quadratic"), [0.0, 0.0]),
    "quartic": (ScalarField(lambda t: 0.25 * (t[0] - 0.5) ** 4 + 0.5 * (t[0] - 0.5) ** 2 + (t[1] + 0.2) ** 2
                            + 0.3 * (t[0] - 0.5) * (t[1] + 0.2), 2, name="quartic"), [0.3, 0.0]),
    "logsumexp": (ScalarField(lambda t: np.log(np.exp(t[0]) + np.exp(t[1]) + np.exp(-t[0] - 2 * t[1]))
                              + 0.1 * np.sum(t * t), 2, name="logsumexp"), [0.0, 0.0]),
    "rosenbrock": (ScalarField(lambda t: (1 - t[0]) ** 2 + 5 * (t[1] - t[0] ** 2) ** 2, 2, name="rosenbrock"),
                   [0.9, 0.8]),
    "logistic": (ScalarField(_logistic, 2, name="logistic"), [0.0, 0.0]),
}


def located_minimum(name):
    L, start = TEST_LOSSES[name]
    theta, _, _ = newton_minimize(L, start, max_steps=50)
    return L, theta


def builtin_charts(dim=2):
    """One instance of every built-in kind; log is defined on the positive orthant only."""
    return {
        "identity": charts.identity(dim),
        "affine": charts.affine(np.array([[1.5, 0.4], [-0.3, 0.8]])[:dim, :dim], np.full(dim, 0.2)),
        "elementwise_exp": charts.elementwise_exp(dim),
        "elementwise_log": charts.elementwise_log(dim),
        "softplus": charts.softplus(dim),
        "layer_scale": charts.layer_scale(2.0, 1, dim),
        "triangular_poly": charts.triangular_poly(dim, seed=7, eps=0.15),
    }


def random_points(rng, box, n, width=1.5):
    """``n`` points inside ``box``: uniform on bounded sides, offset from finite bounds otherwise."""
    lo = np.where(np.isfinite(box.lower), box.lower + 0.2, -width)
    hi = np.where(np.isfinite(box.upper), box.upper - 0.2, width)
    hi = np.where(np.isfinite(box.lower) & ~np.isfinite(box.upper), box.lower + 0.2 + 2 * width, hi)
    return rng.uniform(lo, hi, size=(n, box.dim))


POSITIVE = DomainBox.positive(2)
