"""Global reparametrizations and the tensor transformation rules.

A :class:`Diffeomorphism` maps theta-coordinates to psi-coordinates with an
explicit analytic inverse.  Forward and inverse maps act on axis 0, so they
accept a single point of shape ``(d,)`` or a batch of shape ``(d, n)``, and
they are written with NumPy only so dual numbers flow through them.

The psi-side inverse Jacobian is always formed as the matrix inverse of the
forward Jacobian at ``theta = inverse(psi)``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import calculus
from .calculus import DomainBox, ScalarField
from .dual import primal
from .errors import DomainError, InvalidChart
from .linalg import MAX_CONDITION, check_spd, inv, solve, sym


@dataclass(frozen=True)
class Diffeomorphism:
    name: str
    forward: Callable
    inverse: Callable
    domain: DomainBox
    codomain: DomainBox
    elementwise: bool = False
    # closed-form log|det J^{-1}(psi)|; None means "compute from the Jacobian"
    inverse_logdet: Optional[Callable] = None
    params: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self):
        return self.domain.dim

    def __call__(self, theta):
        return self.forward(theta)

    def forward_map(self):
        return calculus.VectorMap(self.forward, self.dim, self.dim, self.domain, self.name)

    def inverse_map(self):
        return calculus.VectorMap(self.inverse, self.dim, self.dim, self.codomain, self.name + "^-1")

    def jacobian(self, theta):
        """``J(theta) = d psi / d theta``."""
        return calculus.jacobian(self.forward_map(), theta)

    def inverse_jacobian(self, psi):
        """``J^{-1}(psi)``, the matrix inverse of ``J`` at ``inverse(psi)``."""
        return inv(self.jacobian(self.inverse(_as_point(psi))), "chart Jacobian")

    def log_abs_det_inverse_jacobian(self, psi):
        if self.inverse_logdet is not None:
            return self.inverse_logdet(psi)
        _, logdet = np.linalg.slogdet(self.jacobian(self.inverse(psi)))
        return -logdet

    def inverted(self):
        """The inverse reparametrization psi -> theta."""
        inv_logdet = None
        if self.inverse_logdet is not None:
            fwd_logdet = self.inverse_logdet
            inv_logdet = lambda theta: -fwd_logdet(self.forward(theta))
        return Diffeomorphism(
            name=f"inv({self.name})", forward=self.inverse, inverse=self.forward,
            domain=self.codomain, codomain=self.domain, elementwise=self.elementwise,
            inverse_logdet=inv_logdet, params={"kind": "inverse", "of": self.params},
        )


def _as_point(x):
    if hasattr(x, "tag"):
        return x
    return np.asarray(x, dtype=float)


def _col(v, x):
    """Reshape a length-d vector to broadcast against ``x`` of shape (d, ...)."""
    return np.reshape(v, (-1,) + (1,) * (np.ndim(x) - 1))


def _sum0(x):
    return np.sum(x, axis=0)


def identity(dim):
    box = DomainBox.real(dim)
    return Diffeomorphism("identity", lambda t: t, lambda p: p, box, box, elementwise=True,
                          inverse_logdet=lambda p: 0.0 * _sum0(primal(p)), params={"kind": "identity"})


def affine(A, b=None):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    dim = A.shape[0]
    if A.shape != (dim, dim):
        raise InvalidChart("affine chart needs a square matrix")
    b = np.zeros(dim) if b is None else np.asarray(b, dtype=float).reshape(dim)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise InvalidChart(f"affine matrix is singular (cond={cond:.3g})")
    logdet = np.linalg.slogdet(A)[1]
    box = DomainBox.real(dim)
    diagonal = bool(np.all(A == np.diag(np.diagonal(A))))
    return Diffeomorphism(
        "affine",
        lambda t: A @ t + _col(b, t),
        lambda p: np.linalg.solve(A, p - _col(b, p)),
        box, box, elementwise=diagonal,
        inverse_logdet=lambda p: -logdet + 0.0 * _sum0(primal(p)),
        params={"kind": "affine", "A": A.tolist(), "b": b.tolist()},
    )


def elementwise_exp(dim):
    return Diffeomorphism(
        "exp", np.exp, np.log, DomainBox.real(dim), DomainBox.positive(dim), elementwise=True,
        inverse_logdet=lambda p: -_sum0(np.log(p)), params={"kind": "elementwise_exp"},
    )


def elementwise_log(dim):
    return Diffeomorphism(
        "log", np.log, np.exp, DomainBox.positive(dim), DomainBox.real(dim), elementwise=True,
        inverse_logdet=_sum0, params={"kind": "elementwise_log"},
    )


def softplus(dim):
    """psi = log(1 + e^theta), mapping the real line onto the positive half-line."""
    return Diffeomorphism(
        "softplus",
        lambda t: np.logaddexp(0.0, t),
        lambda p: p + np.log(-np.expm1(-p)),
        DomainBox.real(dim), DomainBox.positive(dim), elementwise=True,
        inverse_logdet=lambda p: -_sum0(np.log(-np.expm1(-p))),
        params={"kind": "softplus"},
    )


def layer_scale(alpha, split, dim):
    """Scale the first ``split`` coordinates by alpha and the rest by 1/alpha.

    This is the layer-rescaling symmetry of ReLU-like networks: the function
    computed by the net is unchanged, its Hessian is not.
    """
    if alpha == 0 or not np.isfinite(alpha):
        raise InvalidChart("layer_scale needs a finite, non-zero alpha")
    if not 0 <= split <= dim:
        raise InvalidChart(f"split index {split} out of range for dimension {dim}")
    c = np.concatenate([np.full(split, float(alpha)), np.full(dim - split, 1.0 / alpha)])
    logdet = float(np.sum(np.log(np.abs(c))))
    box = DomainBox.real(dim)
    return Diffeomorphism(
        "layer_scale",
        lambda t: _col(c, t) * t,
        lambda p: p / _col(c, p),
        box, box, elementwise=True,
        inverse_logdet=lambda p: -logdet + 0.0 * _sum0(primal(p)),
        params={"kind": "layer_scale", "alpha": float(alpha), "split": int(split)},
    )


def triangular_poly(dim, seed=0, eps=0.1):
    """psi_i = theta_i + eps * p_i(theta_1..theta_{i-1}) with random quadratic p_i.

    The Jacobian is unit lower-triangular, so the inverse is exact forward
    substitution and det J = 1.
    """
    if not 0 < eps <= 0.2:
        raise InvalidChart("triangular_poly needs 0 < eps <= 0.2")
    rng = np.random.default_rng(seed)
    lin = rng.standard_normal((dim, dim))
    quad = rng.standard_normal((dim, dim))
    cross = rng.standard_normal(dim)

    def poly(i, comps):
        out = 0.0
        for j in range(i):
            out = out + lin[i, j] * comps[j] + quad[i, j] * comps[j] ** 2
        if i >= 2:
            out = out + cross[i] * comps[0] * comps[i - 1]
        return out

    def forward(t):
        return np.stack([t[i] + eps * poly(i, t) for i in range(dim)])

    def inverse(p):
        comps = []
        for i in range(dim):
            comps.append(p[i] - eps * poly(i, comps))
        return np.stack(comps)

    box = DomainBox.real(dim)
    return Diffeomorphism(
        "triangular_poly", forward, inverse, box, box,
        inverse_logdet=lambda p: 0.0 * _sum0(primal(p)),
        params={"kind": "triangular_poly", "seed": int(seed), "eps": float(eps)},
    )


def compose(first, second):
    """The chart ``second o first`` (apply ``first``, then ``second``)."""
    if first.dim != second.dim:
        raise InvalidChart("cannot compose charts of different dimension")
    if not first.codomain.within(second.domain):
        raise InvalidChart(f"codomain of {first.name} is not inside the domain of {second.name}")
    logdet = None
    if first.inverse_logdet is not None and second.inverse_logdet is not None:
        logdet = lambda p: second.inverse_logdet(p) + first.inverse_logdet(second.inverse(p))
    return Diffeomorphism(
        f"{second.name}o{first.name}",
        lambda t: second.forward(first.forward(t)),
        lambda p: first.inverse(second.inverse(p)),
        first.domain, second.codomain,
        elementwise=first.elementwise and second.elementwise,
        inverse_logdet=logdet,
        params={"kind": "compose", "charts": [first.params, second.params]},
    )


_BUILDERS = {
    "identity": lambda dim, **kw: identity(dim),
    "affine": lambda dim, A=None, b=None: affine(np.eye(dim) if A is None else A, b),
    "elementwise_exp": lambda dim: elementwise_exp(dim),
    "elementwise_log": lambda dim: elementwise_log(dim),
    "softplus": lambda dim: softplus(dim),
    "layer_scale": lambda dim, alpha=2.0, split=1: layer_scale(alpha, split, dim),
    "triangular_poly": lambda dim, seed=0, eps=0.1: triangular_poly(dim, seed, eps),
}

CHART_KINDS = tuple(_BUILDERS)


def make_chart(kind, dim, **params):
    """Build a built-in chart by name, e.g. ``make_chart("layer_scale", 2, alpha=2.0)``."""
    try:
        builder = _BUILDERS[kind]
    except KeyError:
        raise InvalidChart(f"unknown chart kind {kind!r}") from None
    try:
        return builder(dim, **params)
    except TypeError as exc:
        raise InvalidChart(f"bad parameters for chart {kind!r}: {exc}") from None


def random_chart(rng, dim, positive_domain=False):
    """A random chart for invariance sweeps.

    On the real line, draws from affine, layer_scale, triangular_poly, exp,
    softplus and compositions of these.  With ``positive_domain`` the chart is
    defined on the positive orthant (log, or log followed by a real-line chart).
    """
    def affine_like():
        Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        A = Q * rng.uniform(0.5, 2.0, size=dim)
        return affine(A, rng.standard_normal(dim))

    simple = [
        affine_like,
        lambda: layer_scale(rng.uniform(0.3, 3.0) * rng.choice([-1, 1]), int(rng.integers(0, dim + 1)), dim),
        lambda: triangular_poly(dim, int(rng.integers(1 << 30)), rng.uniform(0.05, 0.2)),
        lambda: elementwise_exp(dim),
        lambda: softplus(dim),
    ]
    real_to_real = simple[:3]
    if positive_domain:
        base = elementwise_log(dim)
        if rng.random() < 0.5:
            return base
        return compose(base, real_to_real[int(rng.integers(len(real_to_real)))]())
    pick = int(rng.integers(len(simple) + 1))
    if pick < len(simple):
        return simple[pick]()
    return compose(real_to_real[int(rng.integers(3))](), real_to_real[int(rng.integers(3))]())


# -- transformation rules ------------------------------------------------------

def _check_point(phi, theta):
    theta = np.asarray(theta, dtype=float)
    if not phi.domain.contains(theta):
        raise DomainError(f"{theta} outside the domain of chart {phi.name}")
    return theta


def pushforward_vector(phi, theta, v):
    """Tangent vector: ``v -> J(theta) v``."""
    theta = _check_point(phi, theta)
    return phi.jacobian(theta) @ np.asarray(v, dtype=float)


def pushforward_covector(phi, theta, omega):
    """Covector: ``omega -> J(theta)^{-T} omega`` (the chain rule)."""
    theta = _check_point(phi, theta)
    return solve(phi.jacobian(theta).T, np.asarray(omega, dtype=float), "chart Jacobian")


def pushforward_bilinear(phi, theta, H):
    """(0,2)-tensor: ``H -> J^{-T} H J^{-1}``."""
    theta = _check_point(phi, theta)
    Jinv = inv(phi.jacobian(theta), "chart Jacobian")
    return sym(Jinv.T @ np.asarray(H, dtype=float) @ Jinv)


def pushforward_metric(phi, theta, G):
    """Metric: same rule as a bilinear form, with SPD checked on input."""
    check_spd(G)
    return pushforward_bilinear(phi, theta, G)


def pushforward_function(phi, f):
    """Scalar function: ``f -> f o phi^{-1}`` on the psi side."""
    name = getattr(f, "name", "") or getattr(f, "__name__", "f")
    return ScalarField(lambda psi: f(phi.inverse(psi)), phi.dim, phi.codomain, f"{name}@{phi.name}")
