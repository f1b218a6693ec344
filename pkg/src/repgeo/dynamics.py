"""Gradient flows, their reparametrized versions, and Newton's method.

The continuous dynamics ``theta' = -G(theta)^{-1} grad L`` are integrated with
explicit Euler (which is exactly gradient descent with step ``h``) or classical
RK4.  In psi-coordinates there are two candidates:

* the *naive* flow, which only applies the chain rule to the gradient and so
  silently swaps the metric for ``J^T J``;
* the *equivariant* flow, which also transforms the metric and therefore
  traces the image of the theta-trajectory.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import calculus
from .errors import DomainError, DomainExit, InvalidComparison, NoConvergence, NumericsError
from .linalg import check_condition, solve, spd_solve

INTEGRATORS = ("euler", "rk4")


@dataclass
class Trajectory:
    points: np.ndarray
    times: np.ndarray
    chart_name: str
    integrator: str
    step: float
    exit_step: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.times = np.asarray(self.times, dtype=float)
        if len(self.points) != len(self.times):
            raise ValueError("points and times must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def final(self):
        return self.points[-1]

    def csv_rows(self):
        d = self.points.shape[1]
        for t, p in zip(self.times, self.points):
            row = {"t": t}
            row.update({f"theta_{i + 1}": p[i] for i in range(d)})
            yield row

    def to_dict(self):
        return {
            "chart": self.chart_name, "integrator": self.integrator, "step": self.step,
            "exit_step": self.exit_step, "times": self.times.tolist(),
            "points": self.points.tolist(),
        }


def _integrate(field_fn, x0, h, steps, integrator, domain, chart_name, strict):
    if h <= 0:
        raise ValueError("step size must be positive")
    if integrator not in INTEGRATORS:
        raise ValueError(f"unknown integrator {integrator!r}")
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    if domain is not None and not domain.contains(x):
        raise DomainError(f"initial point {x} outside the domain")

    def inside(p):
        return domain is None or domain.contains(p)

    def rhs(p):
        if not inside(p):
            raise DomainError("stage left the domain")
        v = np.asarray(field_fn(p), dtype=float)
        if not np.all(np.isfinite(v)):
            raise NumericsError("non-finite velocity")
        return v

    points = [x.copy()]
    exit_step = None
    for t in range(steps):
        try:
            if integrator == "euler":
                x_new = x + h * rhs(x)
            else:
                k1 = rhs(x)
                k2 = rhs(x + 0.5 * h * k1)
                k3 = rhs(x + 0.5 * h * k2)
                k4 = rhs(x + h * k3)
                x_new = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(x_new)):
                raise NumericsError(f"non-finite state at step {t + 1}")
            if not inside(x_new):
                raise DomainError("step left the domain")
        except DomainError:
            if strict:
                raise DomainExit(t + 1) from None
            exit_step = t + 1
            break
        x = x_new
        points.append(x.copy())
    times = h * np.arange(len(points))
    return Trajectory(np.array(points), times, chart_name, integrator, h, exit_step)


def _natural_direction(L, G, theta):
    g = calculus.gradient(L, theta)
    if G is None:
        return g
    return spd_solve(np.asarray(G(theta), dtype=float), g)


def flow(L, G, theta0, h, steps, integrator="euler", chart_name="theta", strict=False):
    """Integrate ``theta' = -G(theta)^{-1} grad L``; ``G=None`` is the Euclidean metric.

    Leaving the domain of ``L`` ends the trajectory and records ``exit_step``
    (or raises :class:`DomainExit` with ``strict=True``).
    """
    return _integrate(lambda th: -_natural_direction(L, G, th), theta0, h, steps, integrator,
                      getattr(L, "domain", None), chart_name, strict)


def _pulled_back(L, phi, psi):
    theta = phi.inverse(psi)
    domain = getattr(L, "domain", None)
    if domain is not None and not domain.contains(theta):
        raise DomainError("preimage outside the loss domain")
    return theta


def naive_reparam_flow(L, phi, psi0, h, steps, integrator="euler", strict=False):
    """``psi' = -J^{-1}(psi)^T grad L`` at ``phi^{-1}(psi)``: the metric is ignored."""
    def velocity(psi):
        theta = _pulled_back(L, phi, psi)
        return -solve(phi.jacobian(theta).T, calculus.gradient(L, theta), "chart Jacobian")

    return _integrate(velocity, psi0, h, steps, integrator, phi.codomain, f"naive:{phi.name}", strict)


def equivariant_reparam_flow(L, G, phi, psi0, h, steps, integrator="euler", strict=False):
    """``psi' = -J(theta) G(theta)^{-1} grad L`` at ``theta = phi^{-1}(psi)``."""
    def velocity(psi):
        theta = _pulled_back(L, phi, psi)
        return -(phi.jacobian(theta) @ _natural_direction(L, G, theta))

    return _integrate(velocity, psi0, h, steps, integrator, phi.codomain, f"equivariant:{phi.name}", strict)


def equivariance_gap(traj_theta, traj_psi, phi):
    """Largest distance ``|phi(theta_t) - psi_t|`` over the shared time grid."""
    if traj_theta.integrator != traj_psi.integrator or not np.isclose(traj_theta.step, traj_psi.step, rtol=0, atol=0):
        raise InvalidComparison("trajectories use different integrators or step sizes")
    n = min(len(traj_theta), len(traj_psi))
    if n == 0:
        raise InvalidComparison("empty trajectory")
    mapped = phi.forward(traj_theta.points[:n].T).T
    return float(np.max(np.linalg.norm(mapped - traj_psi.points[:n], axis=1)))


def newton_minimize(L, theta0, max_steps=50, tol=1e-10):
    """Unit-step Newton iteration ``theta <- theta - H^{-1} grad L``.

    Returns ``(theta_star, steps_taken, trajectory)``; stops once
    ``|grad L| <= tol``.
    """
    theta = np.asarray(theta0, dtype=float).reshape(-1).copy()
    points = [theta.copy()]
    for steps in range(max_steps + 1):
        g = calculus.gradient(L, theta)
        if np.linalg.norm(g) <= tol:
            traj = Trajectory(np.array(points), np.arange(len(points), dtype=float), "theta", "newton", 1.0)
            return theta, steps, traj
        if steps == max_steps:
            break
        H = calculus.hessian(L, theta)
        check_condition(H, "Hessian")
        theta = theta - np.linalg.solve(H, g)
        if not np.all(np.isfinite(theta)):
            raise NumericsError("Newton iterate became non-finite")
        points.append(theta.copy())
    raise NoConvergence(f"Newton did not converge in {max_steps} steps (|grad|={np.linalg.norm(g):.3g})")
