"""Sine regression data and a one-hidden-layer tanh network.

Random numbers come from NumPy's ``default_rng`` (PCG64); Gaussian noise uses
``standard_normal`` (ziggurat).  Both are fixed for a given NumPy major
version, which is what the byte-identical output guarantee relies on.
"""

from dataclasses import dataclass, field

import numpy as np

from .. import calculus
from ..errors import InvalidData, InvalidModel, NumericsError
from ..metrics import ModelSpec, outer_mean

INPUT_RANGE = (0.0, 8.0)
OPTIMIZERS = ("gd", "fisher", "newton")


@dataclass(frozen=True)
class SineDataset:
    inputs: np.ndarray
    targets: np.ndarray
    seed: int

    def __post_init__(self):
        if self.inputs.shape != self.targets.shape or self.inputs.ndim != 1:
            raise InvalidData("inputs and targets must be 1-D arrays of equal length")

    @property
    def m(self):
        return self.inputs.size


def generate_sine_dataset(seed, m=150, noise=0.3, inputs=None):
    """``y = sin x + noise * eps`` with ``x ~ U[0, 8]`` unless ``inputs`` is given."""
    if noise < 0:
        raise InvalidData("noise must be non-negative")
    rng = np.random.default_rng(seed)
    if inputs is None:
        if m < 1:
            raise InvalidData("need at least one sample")
        x = rng.uniform(*INPUT_RANGE, size=m)
    else:
        x = np.asarray(inputs, dtype=float).reshape(-1)
        if x.size < 1:
            raise InvalidData("need at least one sample")
    y = np.sin(x) + noise * rng.standard_normal(x.size)
    return SineDataset(x, y, int(seed))


@dataclass(frozen=True)
class TanhMLP:
    """``f(x) = w2 . tanh(w1 x + b1) + b2`` with parameters packed as [w1, b1, w2, b2]."""

    hidden: int = 16

    def __post_init__(self):
        if int(self.hidden) < 1:
            raise InvalidModel("the hidden layer needs at least one unit")

    @property
    def dim(self):
        return 3 * self.hidden + 1

    def unpack(self, theta):
        h = self.hidden
        return theta[:h], theta[h:2 * h], theta[2 * h:3 * h], theta[3 * h]

    def init(self, seed):
        rng = np.random.default_rng(seed)
        h = self.hidden
        w1 = rng.standard_normal(h)
        b1 = rng.uniform(-8.0, 8.0, size=h) * np.abs(w1) / 2.0
        w2 = rng.standard_normal(h) / np.sqrt(h)
        return np.concatenate([w1, b1, w2, [0.0]])

    def __call__(self, theta, X):
        w1, b1, w2, b2 = self.unpack(theta)
        x = np.reshape(X, (-1, 1))
        a = np.tanh(x @ np.reshape(w1, (1, -1)) + np.reshape(b1, (1, -1)))
        return a @ np.reshape(w2, (-1, 1)) + b2

    def jacobian(self, theta, X):
        """Per-sample Jacobian ``(m, 1, d)`` in closed form."""
        w1, b1, w2, _ = self.unpack(np.asarray(theta, dtype=float))
        x = np.reshape(X, (-1, 1))
        a = np.tanh(x * w1 + b1)
        da = (1.0 - a * a) * w2
        J = np.concatenate([da * x, da, a, np.ones((x.shape[0], 1))], axis=1)
        return J[:, None, :]

    def spec(self, data, loss="squared"):
        return ModelSpec(net=self, X=data.inputs, Y=data.targets, dim=self.dim, loss=loss,
                         jac=self.jacobian, name=f"tanh_mlp{self.hidden}")


@dataclass
class TrainResult:
    theta: np.ndarray
    loss_curve: np.ndarray
    grad_norm: float
    meta: dict = field(default_factory=dict)

    @property
    def final_loss(self):
        return float(self.loss_curve[-1])


def _objective(model, data, weight_decay):
    """Mean squared-error objective: the summed ERM loss divided by ``m``."""
    spec = model.spec(data)
    m = data.m

    def value(theta):
        r = np.asarray(model(theta, data.inputs), dtype=float)[:, 0] - data.targets
        return 0.5 * float(r @ r) / m + 0.5 * weight_decay * float(theta @ theta)

    def grad(theta):
        return spec.per_sample_gradients(theta).sum(axis=0) / m + weight_decay * theta

    field_ = calculus.ScalarField(
        lambda t: spec.loss_field(0.0)(t) / m + 0.5 * weight_decay * np.sum(t * t), model.dim)
    return value, grad, field_


MAX_DAMPING = 1e12


def _levenberg_step(field_, value, theta, g, damping):
    if not np.any(g):
        return theta, damping
    H = calculus.hessian(field_, theta)
    eye = np.eye(theta.size)
    current = value(theta)
    for _ in range(30):
        try:
            cand = theta - np.linalg.solve(H + damping * eye, g)
        except np.linalg.LinAlgError:
            cand = None
        if cand is not None and value(cand) < current:
            return cand, max(damping / 3.0, 1e-12)
        if damping >= MAX_DAMPING:
            break
        damping = min(10.0 * damping, MAX_DAMPING)
    return theta, damping


def train_mlp(model, data, epochs=1000, optimizer="gd", lr=1e-2, weight_decay=0.0, theta0=None,
              seed=0, damping=1e-3, fisher_damping=1e-3):
    """Full-batch training on the mean squared error.

    ``gd`` takes plain gradient steps of size ``lr``.  ``fisher`` preconditions
    them with the damped empirical Fisher.  ``newton`` takes Newton steps on
    the exact Hessian with Levenberg damping, adapted so that every accepted
    step lowers the loss.
    """
    if optimizer not in OPTIMIZERS:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    theta = model.init(seed) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    if theta.shape != (model.dim,):
        raise InvalidModel(f"expected {model.dim} parameters, got {theta.shape}")
    value, grad, field_ = _objective(model, data, weight_decay)
    spec = model.spec(data)
    curve = [value(theta)]
    for _ in range(epochs):
        g = grad(theta)
        if optimizer == "gd":
            theta = theta - lr * g
        elif optimizer == "fisher":
            F = outer_mean(spec.per_sample_gradients(theta))
            theta = theta - lr * np.linalg.solve(F + fisher_damping * np.eye(model.dim), g)
        else:
            theta, damping = _levenberg_step(field_, value, theta, g, damping)
        curve.append(value(theta))
        if not np.isfinite(curve[-1]) or not np.all(np.isfinite(theta)):
            raise NumericsError("training diverged")
    return TrainResult(theta, np.array(curve), float(np.linalg.norm(grad(theta))),
                       {"optimizer": optimizer, "lr": lr, "epochs": epochs})
