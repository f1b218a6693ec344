"""Exact forward-mode derivatives plus central-difference oracles.

Targets are plain callables written with NumPy (or the :class:`ScalarField`
/ :class:`VectorMap` wrappers, which add a dimension and a domain).  Inputs may
themselves be :class:`~repgeo.dual.Dual` arrays, so every routine here can be
differentiated again.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dual import Dual, primal, tangent
from .errors import DomainError, NumericsError

FD_STEP_FIRST = 1e-5
FD_STEP_SECOND = 1e-4


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned box with optional infinite bounds.

    ``strict`` marks the bounds as excluded (an open box), which is the
    default since every built-in chart lives on an open set.
    """

    lower: np.ndarray
    upper: np.ndarray
    strict: bool = True

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(lo >= hi):
            raise ValueError("DomainBox needs lower < upper on every axis")
        object.__setattr__(self, "lower", lo.copy())
        object.__setattr__(self, "upper", hi.copy())

    @classmethod
    def real(cls, dim):
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @classmethod
    def positive(cls, dim):
        return cls(np.zeros(dim), np.full(dim, np.inf))

    @property
    def dim(self):
        return self.lower.size

    @property
    def is_bounded(self):
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def contains(self, x, margin=0.0):
        x = np.asarray(primal(x), dtype=float)
        lo = self.lower[(...,) + (None,) * (x.ndim - 1)] if x.ndim > 1 else self.lower
        hi = self.upper[(...,) + (None,) * (x.ndim - 1)] if x.ndim > 1 else self.upper
        if self.strict:
            ok = (x - margin > lo) & (x + margin < hi)
        else:
            ok = (x - margin >= lo) & (x + margin <= hi)
        return bool(np.all(ok))

    def within(self, other):
        """True when this box is a subset of ``other``."""
        return bool(np.all(self.lower >= other.lower) and np.all(self.upper <= other.upper))

    def sample(self, rng, n, fallback_width=2.0):
        """Uniform interior samples; infinite sides are clipped to ``fallback_width``."""
        lo = np.where(np.isfinite(self.lower), self.lower,
                      np.where(np.isfinite(self.upper), self.upper - 2 * fallback_width, -fallback_width))
        hi = np.where(np.isfinite(self.upper), self.upper,
                      np.where(np.isfinite(self.lower), self.lower + 2 * fallback_width, fallback_width))
        span = hi - lo
        return rng.uniform(lo + 0.05 * span, hi - 0.05 * span, size=(n, self.dim))


@dataclass(frozen=True)
class ScalarField:
    fn: Callable
    dim: int
    domain: Optional[DomainBox] = None
    name: str = ""

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float) if isinstance(x, (list, tuple)) else x)


@dataclass(frozen=True)
class VectorMap:
    fn: Callable
    in_dim: int
    out_dim: int
    domain: Optional[DomainBox] = None
    name: str = ""

    def __call__(self, x):
        return self.fn(x)


def _prepare(f, x):
    if not isinstance(x, Dual):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
    domain = getattr(f, "domain", None)
    if domain is not None and not domain.contains(x):
        raise DomainError(f"point {np.asarray(primal(x))} outside domain of {getattr(f, 'name', '') or f}")
    return x


def _check_finite(value, what):
    if not np.all(np.isfinite(primal(value))):
        raise NumericsError(f"non-finite {what}")


def _directional(f, x, direction):
    xs = Dual.seed(x, direction)
    with np.errstate(all="ignore"):
        y = f(xs)
    _check_finite(y, "function value")
    return tangent(y, xs.tag)


def gradient(f, x):
    """Gradient of a scalar function by ``d`` forward-mode passes."""
    x = _prepare(f, x)
    d = x.shape[0]
    basis = np.eye(d)
    g = np.stack([_directional(f, x, basis[i]) for i in range(d)])
    _check_finite(g, "gradient")
    return g


def jacobian(f, x):
    """Jacobian ``(out_dim, in_dim)`` of a vector-valued map."""
    x = _prepare(f, x)
    d = x.shape[0]
    basis = np.eye(d)
    cols = [_directional(f, x, basis[i]) for i in range(d)]
    J = np.stack(cols, axis=-1)
    if len(_shape_of(J)) == 1:
        J = np.reshape(J, (1, d))
    _check_finite(J, "Jacobian")
    return J


def _shape_of(a):
    return a.shape if isinstance(a, Dual) else np.shape(a)


def hessian(f, x, method="direct"):
    """Symmetrized Hessian of a scalar function.

    ``method="direct"`` nests two perturbations per entry of the upper
    triangle; ``"jacobian_of_gradient"`` differentiates :func:`gradient`.
    """
    x = _prepare(f, x)
    d = x.shape[0]
    basis = np.eye(d)
    if method == "jacobian_of_gradient":
        H = jacobian(lambda y: gradient(f, y), x)
    elif method == "direct":
        entries = {}
        with np.errstate(all="ignore"):
            for i in range(d):
                xi = Dual.seed(x, basis[i])
                for j in range(i, d):
                    xij = Dual.seed(xi, basis[j])
                    y = f(xij)
                    _check_finite(y, "function value")
                    entries[i, j] = tangent(tangent(y, xij.tag), xi.tag)
        H = np.stack([
            np.stack([entries[min(i, j), max(i, j)] for j in range(d)])
            for i in range(d)
        ])
    else:
        raise ValueError(f"unknown Hessian method {method!r}")
    H = 0.5 * (H + H.T)
    _check_finite(H, "Hessian")
    return H


def fd_oracle(kind, target, x, step=None):
    """Central-difference approximation, truncation error O(step**2).

    ``kind`` is ``"gradient"``, ``"jacobian"`` or ``"hessian"``.  Hessian
    entries use the four-point stencil with offsets ``±step`` along each of
    the two axes, so the diagonal is sampled at ``±2*step``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if step is None:
        step = FD_STEP_SECOND if kind == "hessian" else FD_STEP_FIRST
    if step <= 0:
        raise ValueError("step must be positive")
    reach = 2 * step if kind == "hessian" else step
    domain = getattr(target, "domain", None)
    if domain is not None and not domain.contains(x, margin=reach):
        raise DomainError(f"finite-difference stencil of width {reach} leaves the domain at {x}")

    def ev(p):
        return np.asarray(target(p), dtype=float)

    d = x.size
    basis = np.eye(d) * step
    if kind in ("gradient", "jacobian"):
        cols = [(ev(x + basis[i]) - ev(x - basis[i])) / (2 * step) for i in range(d)]
        out = np.stack(cols, axis=-1)
        if kind == "jacobian" and out.ndim == 1:
            out = out.reshape(1, d)
        return out
    if kind == "hessian":
        H = np.empty((d, d))
        for i in range(d):
            for j in range(i, d):
                ei, ej = basis[i], basis[j]
                val = (ev(x + ei + ej) - ev(x + ei - ej) - ev(x - ei + ej) + ev(x - ei - ej)) / (4 * step**2)
                H[i, j] = H[j, i] = val
        return H
    raise ValueError(f"unknown oracle kind {kind!r}")
