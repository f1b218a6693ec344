"""Densities under reparametrization, Jeffreys priors and Laplace evidence.

A density is only meaningful together with its reference measure.  Pushing a
Lebesgue density through a chart multiplies it by ``|det J^{-1}|``, which
moves its modes.  Dividing by the Riemannian volume ``|det G|^{1/2}`` first
gives a scalar function, and scalar functions carry their modes along.

Laplace convention used throughout::

    log Z = -L(theta*) + (d/2) log(2 pi) - (1/2) log det H(theta*)

where ``L`` already contains the negative log prior.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.integrate import simpson

from . import calculus
from .calculus import DomainBox, ScalarField
from .charts import pushforward_function
from .dual import primal
from .errors import DomainError, InvalidHessian, InvalidMetric, NoConvergence, NotAtMAP, ReparamError
from .linalg import check_spd
from .metrics import MetricField, pushforward_field

log = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
MODE_TOL = 1e-8
MAP_GRAD_TOL = 1e-6
QUAD_NODES = 2001


@dataclass(frozen=True)
class Density:
    """Log-density with respect to ``reference`` ("lebesgue" or a MetricField)."""

    log_density: ScalarField
    reference: Union[str, MetricField] = "lebesgue"
    chart_name: str = "theta"
    normalized: bool = True

    @property
    def dim(self):
        return self.log_density.dim

    @property
    def domain(self):
        return self.log_density.domain or DomainBox.real(self.dim)

    @property
    def is_riemannian(self):
        return isinstance(self.reference, MetricField)

    def log_prob(self, x):
        return self.log_density(x)

    def pdf(self, x):
        return np.exp(self.log_density(x))


def _field(fn, dim, domain, name):
    return ScalarField(fn, dim, domain, name)


def gaussian(mean, cov):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = mean.size
    check_spd(cov, "covariance")
    chol = np.linalg.cholesky(cov)
    prec = np.linalg.inv(cov)
    const = -0.5 * d * LOG_2PI - float(np.sum(np.log(np.diagonal(chol))))

    def logq(x):
        r = x - np.reshape(mean, (-1,) + (1,) * (np.ndim(primal(x)) - 1))
        quad = np.sum(r * (prec @ r), axis=0)
        return const - 0.5 * quad

    return Density(_field(logq, d, None, "gaussian"))


def standard_normal(dim=1):
    return gaussian(np.zeros(dim), np.eye(dim))


def uniform(box):
    """Uniform density on a bounded box."""
    if not box.is_bounded:
        raise DomainError("uniform density needs a bounded box")
    logvol = float(np.sum(np.log(box.upper - box.lower)))
    return Density(_field(lambda x: -logvol + 0.0 * np.sum(x, axis=0), box.dim, box, "uniform"))


# -- transformation rules --------------------------------------------------------

def lebesgue_pushforward(q, phi):
    """``q_psi(psi) = q(phi^{-1}(psi)) |det J^{-1}(psi)|``."""
    if q.is_riemannian:
        raise ValueError("lebesgue_pushforward expects a Lebesgue density")
    if q.dim != phi.dim:
        raise DomainError("density and chart dimensions differ")
    if not q.domain.within(phi.domain):
        raise DomainError(f"support of {q.log_density.name} is not inside the domain of {phi.name}")
    codomain = phi.codomain if q.log_density.domain is None else _image_box(phi, q.domain)

    def logq(psi):
        return q.log_density(phi.inverse(psi)) + phi.log_abs_det_inverse_jacobian(psi)

    name = f"{q.log_density.name}#{phi.name}"
    return Density(_field(logq, q.dim, codomain, name), "lebesgue", phi.name, q.normalized)


def _image_box(phi, box):
    # only exact for elementwise monotone charts; otherwise fall back to the chart codomain
    if not phi.elementwise:
        return phi.codomain
    with np.errstate(all="ignore"):
        a = np.asarray(phi.forward(box.lower), dtype=float)
        b = np.asarray(phi.forward(box.upper), dtype=float)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    if not (np.all(np.isfinite(lo) | np.isneginf(lo)) and np.all(np.isfinite(hi) | np.isposinf(hi))):
        return phi.codomain
    return DomainBox(lo, hi, box.strict)


def _logdet_metric(G, theta):
    g = G(theta)
    check_spd(g)
    sign, logdet = np.linalg.slogdet(g)
    if primal(sign) <= 0:
        raise InvalidMetric("metric determinant is not positive")
    return logdet


def riemannian_density(q, G):
    """Density with respect to ``dV_G``: ``log q - (1/2) log det G``."""
    if q.is_riemannian:
        raise ValueError("density already has a Riemannian reference")

    def logq(theta):
        return q.log_density(theta) - 0.5 * _logdet_metric(G, theta)

    return Density(_field(logq, q.dim, q.log_density.domain, f"{q.log_density.name}/dV_{G.name}"),
                   G, q.chart_name, q.normalized)


def riemannian_pushforward(qG, phi):
    """Carry a Riemannian density to psi-coordinates.

    The value transforms as a function and the reference metric as a metric.
    """
    if not qG.is_riemannian:
        raise ValueError("riemannian_pushforward expects a Riemannian density")
    return Density(pushforward_function(phi, qG.log_density), pushforward_field(phi, qG.reference),
                   phi.name, qG.normalized)


def jeffreys(G, domain):
    """Unnormalized Jeffreys prior ``|det G|^{1/2}`` (Lebesgue reference).

    Integrability of the declared domain is the caller's claim; it is only
    checked by :func:`normalizer` for ``d <= 2``.
    """
    return Density(_field(lambda theta: 0.5 * _logdet_metric(G, theta), G.dim, domain, f"jeffreys({G.name})"),
                   "lebesgue", "theta", normalized=False)


# -- quadrature ------------------------------------------------------------------

def _nodes(lo, hi, n, strict):
    """Endpoint-clustered nodes ``theta = lo + (hi-lo)(1-cos pi s)/2`` and the weights dtheta/ds.

    The substitution absorbs inverse-square-root endpoint singularities.  On
    open boxes the two end nodes are nudged inside so the density is defined.
    """
    s = np.linspace(0.0, 1.0, n)
    u = s.copy()
    if strict:
        u[0], u[-1] = 1e-7, 1.0 - 1e-7
    # 1 -+ cos(pi u) written with half angles so both ends keep full precision
    theta = np.where(u < 0.5, lo + (hi - lo) * np.sin(0.5 * np.pi * u) ** 2,
                     hi - (hi - lo) * np.cos(0.5 * np.pi * u) ** 2)
    dtheta = (hi - lo) * 0.5 * np.pi * np.sin(np.pi * u)
    return s, theta, dtheta


def _evaluate(fn, pts):
    try:
        vals = np.asarray(fn(pts), dtype=float)
        if vals.shape == (pts.shape[1],):
            return vals
    except (ReparamError, ValueError, TypeError, np.linalg.LinAlgError):
        pass
    return np.array([float(fn(pts[:, i])) for i in range(pts.shape[1])])


def integrate(log_fn, box, nodes=QUAD_NODES):
    """``int exp(log_fn)`` over a bounded box with d <= 2 (composite Simpson)."""
    if box.dim > 2:
        raise ValueError("quadrature is only supported for d <= 2")
    if not box.is_bounded:
        raise DomainError("quadrature needs a bounded box")
    axes = [_nodes(box.lower[i], box.upper[i], nodes, box.strict) for i in range(box.dim)]
    if box.dim == 1:
        s, th, w = axes[0]
        vals = np.exp(_evaluate(log_fn, th[None, :])) * w
        return float(simpson(vals, x=s))
    (s0, t0, w0), (s1, t1, w1) = axes
    T0, T1 = np.meshgrid(t0, t1, indexing="ij")
    pts = np.stack([T0.ravel(), T1.ravel()])
    vals = np.exp(_evaluate(log_fn, pts)).reshape(T0.shape) * np.outer(w0, w1)
    return float(simpson(simpson(vals, x=s1, axis=1), x=s0))


def normalizer(q, box=None, nodes=QUAD_NODES):
    """Total mass of ``q`` against its reference measure on ``box`` (default: its domain)."""
    box = q.domain if box is None else box
    if not box.within(q.domain):
        raise DomainError("integration box extends outside the support")
    if not q.is_riemannian:
        return integrate(q.log_density, box, nodes)
    G = q.reference

    def logmass(theta):
        return q.log_density(theta) + 0.5 * _logdet_metric(G, theta)

    return integrate(logmass, box, nodes)


# -- modes -----------------------------------------------------------------------

def _ascend(f, x0, max_iter, tol):
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    fx = float(f(x))
    for _ in range(max_iter):
        g = calculus.gradient(f, x)
        if np.linalg.norm(g) <= tol:
            return x, fx
        H = calculus.hessian(f, x)
        try:
            np.linalg.cholesky(-H)
            step = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            step = g
        slope = float(g @ step)
        t = 1.0
        while t > 1e-14:
            cand = x + t * step
            if f.domain is None or f.domain.contains(cand):
                try:
                    fc = float(f(cand))
                except (DomainError, FloatingPointError):
                    fc = -np.inf
                if np.isfinite(fc) and fc >= fx + 1e-4 * t * slope - 1e-12 * (1.0 + abs(fx)):
                    break
            t *= 0.5
        else:
            raise NoConvergence(f"line search stalled at {x} (|grad|={np.linalg.norm(g):.3g})")
        x, fx = cand, fc
    raise NoConvergence(f"no mode within {max_iter} iterations")


def find_mode(q, theta0, max_iter=200, tol=MODE_TOL):
    """Local maximizer of ``q.log_density``.

    Newton steps on negative-definite Hessians, plain gradient ascent
    otherwise, both with backtracking.  ``theta0`` may hold several starts
    (shape ``(n, d)``); the best mode wins, near-ties (1e-10) going to the
    lexicographically smallest point.
    """
    starts = np.asarray(theta0, dtype=float)
    starts = starts.reshape(1, -1) if starts.ndim <= 1 else starts
    if starts.shape[1] != q.dim:
        raise ValueError(f"start points must have {q.dim} coordinates")
    found, last_error = [], None
    for s in starts:
        if not q.domain.contains(s):
            raise DomainError(f"start {s} outside the support")
        try:
            found.append(_ascend(q.log_density, s, max_iter, tol))
        except NoConvergence as exc:
            last_error = exc
            log.debug("start %s failed: %s", s, exc)
    if not found:
        raise last_error
    best = max(fx for _, fx in found)
    tied = [x for x, fx in found if fx >= best - 1e-10]
    return min(tied, key=tuple)


# -- Laplace ---------------------------------------------------------------------

@dataclass(frozen=True)
class LaplaceReport:
    log_Z: float
    neg_loss_term: float
    remainder_term: float
    theta_map: tuple
    hessian_logdet: float
    meta: dict = field(default_factory=dict, compare=False)

    CSV_FIELDS = ("log_Z", "neg_L", "rest", "hessian_logdet")

    def csv_row(self):
        return {"log_Z": self.log_Z, "neg_L": self.neg_loss_term, "rest": self.remainder_term,
                "hessian_logdet": self.hessian_logdet}

    def to_dict(self):
        out = dict(self.csv_row())
        out["theta_map"] = list(self.theta_map)
        return out


def _spd_logdet(H):
    try:
        chol = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise InvalidHessian("Hessian at the MAP is not positive definite") from None
    return 2.0 * float(np.sum(np.log(np.diagonal(chol))))


def _report(loss_value, H, theta):
    d = H.shape[0]
    logdet = _spd_logdet(0.5 * (H + H.T))
    rest = 0.5 * d * LOG_2PI - 0.5 * logdet
    return LaplaceReport(-loss_value + rest, -loss_value, rest, tuple(float(t) for t in theta), logdet)


def _require_map(L, x):
    g = calculus.gradient(L, x)
    if np.linalg.norm(g) > MAP_GRAD_TOL:
        raise NotAtMAP(f"gradient norm {np.linalg.norm(g):.3g} exceeds {MAP_GRAD_TOL:g}")


def laplace_log_marginal(L_map, theta_map):
    """Laplace log-evidence of ``exp(-L_map)`` around ``theta_map``."""
    theta = np.asarray(theta_map, dtype=float).reshape(-1)
    _require_map(L_map, theta)
    return _report(float(L_map(theta)), calculus.hessian(L_map, theta), theta)


def laplace_log_marginal_naive(L_map, phi, psi_map):
    """Recompute Laplace after substituting ``L o phi^{-1}``.

    The integrand lost its Jacobian factor, so this differs from the
    theta-side value by ``log|det J(theta_map)|``.
    """
    return laplace_log_marginal(pushforward_function(phi, L_map), psi_map)


def laplace_log_marginal_invariant(L_map, phi, psi_map):
    """Laplace log-evidence evaluated in psi-coordinates with the Hessian pulled back.

    ``H`` is a bilinear form, so ``J^T H_psi J`` restores the theta-side
    curvature and the result agrees with :func:`laplace_log_marginal`.
    """
    psi = np.asarray(psi_map, dtype=float).reshape(-1)
    L_psi = pushforward_function(phi, L_map)
    _require_map(L_psi, psi)
    theta = phi.inverse(psi)
    J = phi.jacobian(theta)
    H = J.T @ calculus.hessian(L_psi, psi) @ J
    return _report(float(L_psi(psi)), H, theta)


def naive_shift(L_map, phi, theta_map):
    """``log Z_naive - log Z_theta``; equals ``log|det J(theta_map)|``."""
    theta = np.asarray(theta_map, dtype=float).reshape(-1)
    a = laplace_log_marginal(L_map, theta)
    b = laplace_log_marginal_naive(L_map, phi, phi.forward(theta))
    return b.log_Z - a.log_Z
