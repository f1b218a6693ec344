"""Riemannian metric fields on parameter space.

Includes the curvature matrices of the form ``E[J^T A J]`` built from a
network Jacobian.  Those transform like a metric automatically when the model
is reparametrized, because the network Jacobian picks up ``J^{-1}(psi)``
through the chain rule.  Diagonal approximations and damping do not.

Normalization: :func:`ggn` sums over the dataset (stacked-Jacobian form),
:func:`empirical_fisher` and :func:`family_b` average over it.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import calculus
from .dual import primal
from .errors import InvalidData, InvalidMetric
from .linalg import MAX_CONDITION


@dataclass(frozen=True)
class MetricField:
    fn: Callable
    dim: int
    name: str = "metric"
    # False when fn cannot take dual-number inputs; derivatives then use finite differences
    differentiable: bool = True

    def __call__(self, theta):
        return self.fn(theta)


def euclidean(dim):
    if dim < 1:
        raise ValueError("dimension must be positive")
    eye = np.eye(dim)
    return MetricField(lambda theta: eye.copy(), dim, "euclidean")


def from_callable(fn, dim, name="metric", differentiable=True):
    return MetricField(fn, dim, name, differentiable)


def diagonal_of(M):
    return MetricField(lambda theta: np.diag(np.diagonal(M(theta))), M.dim, f"diag({M.name})", M.differentiable)


def damped(M, lam):
    if not lam > 0:
        raise InvalidMetric("damping must be positive")
    eye = np.eye(M.dim)
    return MetricField(lambda theta: M(theta) + lam * eye, M.dim, f"{M.name}+{lam:g}I", M.differentiable)


def pushforward_field(phi, G):
    """``psi -> J^{-1}(psi)^T G(phi^{-1}(psi)) J^{-1}(psi)`` as a field on the psi side.

    ``J^{-1}(psi)`` is taken as the Jacobian of the inverse map, which equals
    the matrix inverse of ``J`` and keeps the field differentiable.
    """
    inverse = phi.inverse_map()

    def fn(psi):
        Jinv = calculus.jacobian(inverse, psi)
        return Jinv.T @ G(phi.inverse(psi)) @ Jinv

    return MetricField(fn, G.dim, f"{G.name}@{phi.name}", G.differentiable)


# -- models ----------------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(z):
    z = z - np.max(primal(z), axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


class _Squared:
    name = "squared"

    def value(self, F, Y):
        return 0.5 * np.sum((F - Y) ** 2)

    def grad(self, F, Y):
        return F - Y

    def hess(self, F, Y):
        m, k = F.shape
        return np.broadcast_to(np.eye(k), (m, k, k))


class _Logistic:
    """Binary cross-entropy on a single logit, targets in {0, 1}."""

    name = "logistic"

    def value(self, F, Y):
        return np.sum(np.logaddexp(0.0, F) - Y * F)

    def grad(self, F, Y):
        return _sigmoid(F) - Y

    def hess(self, F, Y):
        p = _sigmoid(F)
        return (p * (1.0 - p))[:, :, None]


class _Softmax:
    name = "softmax"

    def value(self, F, Y):
        # constant shift for stability; exact for every derivative order
        zmax = np.max(primal(F), axis=-1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.sum(np.exp(F - zmax), axis=-1))
        return np.sum(lse - np.sum(Y * F, axis=-1))

    def grad(self, F, Y):
        return _softmax(F) - Y

    def hess(self, F, Y):
        p = _softmax(F)
        return np.einsum("mi,ij->mij", p, np.eye(p.shape[1])) - np.einsum("mi,mj->mij", p, p)


LOSSES = {"squared": _Squared(), "logistic": _Logistic(), "softmax": _Softmax()}


@dataclass
class ModelSpec:
    """A network ``net(theta, X) -> (m, k)`` together with data and a loss.

    ``jac`` optionally supplies the per-sample Jacobian ``(m, k, d)``; when it
    is missing the Jacobian is computed by forward-mode differentiation.
    """

    net: Callable
    X: np.ndarray
    Y: np.ndarray
    dim: int
    loss: str = "squared"
    jac: Optional[Callable] = None
    domain: Optional[calculus.DomainBox] = None
    name: str = "model"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Y = np.asarray(self.Y, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]
        if self.X.shape[0] != self.Y.shape[0]:
            raise InvalidData("inputs and targets disagree in sample count")
        if self.loss not in LOSSES:
            raise InvalidData(f"unknown loss {self.loss!r}")

    @property
    def m(self):
        return self.X.shape[0]

    def _require_data(self):
        if self.m == 0:
            raise InvalidData("dataset is empty")

    def outputs(self, theta):
        return self.net(theta, self.X)

    def jacobians(self, theta):
        """Per-sample network Jacobians, shape ``(m, k, d)``."""
        theta = np.asarray(theta, dtype=float)
        if self.jac is not None:
            return np.asarray(self.jac(theta, self.X), dtype=float)
        flat = calculus.VectorMap(lambda t: np.ravel(self.net(t, self.X)), self.dim, None, self.domain)
        J = calculus.jacobian(flat, theta)
        return J.reshape(self.m, -1, self.dim)

    def loss_value(self, theta):
        return LOSSES[self.loss].value(self.outputs(theta), self.Y)

    def loss_field(self, weight_decay=0.0):
        """Empirical risk (sum over samples) plus optional ``weight_decay/2 * |theta|^2``."""
        lossfn = LOSSES[self.loss]

        def L(theta):
            out = lossfn.value(self.net(theta, self.X), self.Y)
            if weight_decay:
                out = out + 0.5 * weight_decay * np.sum(theta * theta)
            return out

        return calculus.ScalarField(L, self.dim, self.domain, f"loss({self.name})")

    def per_sample_gradients(self, theta):
        theta = np.asarray(theta, dtype=float)
        G = LOSSES[self.loss].grad(np.asarray(self.outputs(theta), dtype=float), self.Y)
        return np.einsum("mk,mkd->md", G, self.jacobians(theta))


def reparametrize(model, phi):
    """The same model expressed in psi-coordinates (Jacobians by autodiff)."""
    return ModelSpec(
        net=lambda psi, X: model.net(phi.inverse(psi), X),
        X=model.X, Y=model.Y, dim=model.dim, loss=model.loss, jac=None,
        domain=phi.codomain, name=f"{model.name}@{phi.name}",
    )


def ggn(model, theta):
    """``J(theta; X)^T H_f J(theta; X)`` summed over the dataset."""
    model._require_data()
    J = model.jacobians(theta)
    Hf = LOSSES[model.loss].hess(np.asarray(model.outputs(np.asarray(theta, dtype=float)), dtype=float), model.Y)
    F = np.einsum("mkd,mkl,mle->de", J, Hf, J)
    return 0.5 * (F + F.T)


def empirical_fisher(model, theta):
    """Mean outer product of per-sample loss gradients."""
    model._require_data()
    g = model.per_sample_gradients(theta)
    return outer_mean(g)


def outer_mean(gradients):
    g = np.atleast_2d(np.asarray(gradients, dtype=float))
    if g.shape[0] == 0:
        raise InvalidData("no gradients supplied")
    F = g.T @ g / g.shape[0]
    return 0.5 * (F + F.T)


def family_b(model, A, theta):
    """Empirical mean of ``J_i^T A_i J_i``.

    ``A(f_i, x_i, y_i)`` returns an invertible ``(k, k)`` matrix per sample,
    evaluated on network outputs so it transforms like a function.
    """
    model._require_data()
    theta = np.asarray(theta, dtype=float)
    J = model.jacobians(theta)
    F = np.asarray(model.outputs(theta), dtype=float)
    total = np.zeros((model.dim, model.dim))
    for i in range(model.m):
        Ai = np.atleast_2d(np.asarray(A(F[i], model.X[i], model.Y[i]), dtype=float))
        cond = np.linalg.cond(Ai)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise InvalidMetric(f"per-sample matrix A is not invertible at sample {i}")
        total += J[i].T @ Ai @ J[i]
    total /= model.m
    return 0.5 * (total + total.T)


def ggn_field(model):
    return MetricField(lambda t: ggn(model, t), model.dim, "ggn", differentiable=False)


def empirical_fisher_field(model):
    return MetricField(lambda t: empirical_fisher(model, t), model.dim, "empirical_fisher", differentiable=False)


def family_b_field(model, A):
    return MetricField(lambda t: family_b(model, A, t), model.dim, "family_b", differentiable=False)


def linear_model(X, Y, loss="squared"):
    """``f(x; theta) = theta^T x`` for k = 1; a handy closed-form test model."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 1 and np.ndim(Y) == 1 and len(Y) != 1:
        X = X.T
    d = X.shape[1]
    return ModelSpec(
        net=lambda t, Xb: (Xb @ t)[:, None],
        X=X, Y=np.asarray(Y, dtype=float).reshape(-1, 1), dim=d, loss=loss,
        jac=lambda t, Xb: Xb[:, None, :], name="linear",
    )
