"""Riemannian Hessians and coordinate-invariant sharpness.

The Hessian of a loss is a bilinear form: its determinant, trace and
eigenvalues change under reparametrization.  Raising one index with the metric
gives the endomorphism ``E = G^{-1} H`` whose determinant, trace and
eigenvalues (Gaussian, mean and principal curvatures) do not.

Connection coefficients are those of the Levi-Civita connection of ``G``.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg

from . import calculus
from .errors import NumericsError
from .linalg import check_condition, check_spd, sym

log = logging.getLogger(__name__)

CRITICAL_GRAD_NORM = 1e-8
FD_METRIC_STEP = 1e-5


def metric_derivatives(G, theta):
    """``dG[i, j, l] = d g_ij / d theta_l``."""
    theta = np.asarray(theta, dtype=float)
    d = theta.size
    flat = lambda t: np.ravel(G(t))
    if getattr(G, "differentiable", True):
        D = calculus.jacobian(flat, theta)
    else:
        D = calculus.fd_oracle("jacobian", flat, theta, step=FD_METRIC_STEP)
    return np.asarray(D).reshape(d, d, d)


def christoffel(G, theta):
    """Christoffel symbols of the second kind, ``Gamma[k, i, j]``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    g = np.asarray(G(theta), dtype=float)
    check_condition(g, "metric")
    dG = metric_derivatives(G, theta)
    # lowered[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    lowered = np.einsum("jli->lij", dG) + np.einsum("ilj->lij", dG) - np.einsum("ijl->lij", dG)
    Gamma = 0.5 * np.einsum("kl,lij->kij", np.linalg.inv(g), lowered)
    return 0.5 * (Gamma + Gamma.transpose(0, 2, 1))


def riemannian_hessian(L, G, theta, full_output=False):
    """Covariant Hessian ``d^2 L - Gamma^k_ij d_k L``.

    ``G=None`` means the Euclidean metric.  When ``|grad L| <= 1e-8`` the
    connection term is skipped; with ``full_output`` the return value is
    ``(H, skipped)``.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    H = calculus.hessian(L, theta)
    skipped = True
    if G is not None:
        g = calculus.gradient(L, theta)
        if np.linalg.norm(g) > CRITICAL_GRAD_NORM:
            H = H - np.einsum("kij,k->ij", christoffel(G, theta), g)
            skipped = False
        else:
            log.debug("gradient norm below %g; Christoffel term skipped", CRITICAL_GRAD_NORM)
    H = sym(H)
    return (H, skipped) if full_output else H


def hessian_endomorphism(G, H):
    """``E = G^{-1} H``, the Hessian with one index raised."""
    check_spd(G)
    return np.linalg.solve(np.asarray(G, dtype=float), np.asarray(H, dtype=float))


@dataclass(frozen=True)
class SharpnessReport:
    kind: str
    determinant: float
    trace: float
    eigenvalues: tuple

    CSV_FIELDS = ("kind", "det", "trace", "eig_min", "eig_max")

    @property
    def eig_min(self):
        return self.eigenvalues[0]

    @property
    def eig_max(self):
        return self.eigenvalues[-1]

    def to_dict(self):
        out = asdict(self)
        out["eigenvalues"] = list(self.eigenvalues)
        return out

    def csv_row(self):
        return {"kind": self.kind, "det": self.determinant, "trace": self.trace,
                "eig_min": self.eig_min, "eig_max": self.eig_max}


def sharpness(M, kind="bilinear", metric=None):
    """Determinant, trace and sorted eigenvalues of a Hessian.

    ``kind="bilinear"`` reads ``M`` as the Hessian bilinear form.  With
    ``kind="endomorphism"`` either pass the bilinear Hessian together with
    ``metric`` (the spectrum is taken from ``L^{-1} H L^{-T}`` with ``G = L L^T``)
    or pass ``E`` itself.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("sharpness needs a square matrix")
    if kind == "bilinear":
        S = sym(M)
        eig = np.linalg.eigvalsh(S)
        det = np.linalg.det(S)
        tr = np.trace(S)
    elif kind == "endomorphism" and metric is not None:
        check_spd(metric)
        chol = np.linalg.cholesky(np.asarray(metric, dtype=float))
        half = scipy.linalg.solve_triangular(chol, sym(M), lower=True)
        S = sym(scipy.linalg.solve_triangular(chol, half.T, lower=True).T)
        eig = np.linalg.eigvalsh(S)
        det = np.linalg.det(S)
        tr = np.trace(S)
    elif kind == "endomorphism":
        try:
            raw = np.linalg.eigvals(M)
        except np.linalg.LinAlgError as exc:
            raise NumericsError(f"eigenvalue solver failed: {exc}") from None
        scale = 1.0 + np.max(np.abs(raw))
        if np.max(np.abs(raw.imag)) > 1e-9 * scale:
            raise NumericsError("endomorphism has complex eigenvalues")
        eig = np.sort(raw.real)
        det = np.linalg.det(M)
        tr = np.trace(M)
    else:
        raise ValueError(f"unknown sharpness kind {kind!r}")
    return SharpnessReport(kind, float(det), float(tr), tuple(float(e) for e in np.sort(eig)))


def transformed_endomorphism(phi, theta, G, H):
    """Endomorphism in psi-coordinates from the transformed metric and Hessian."""
    from .charts import pushforward_bilinear, pushforward_metric

    G_hat = pushforward_metric(phi, theta, G)
    H_hat = pushforward_bilinear(phi, theta, H)
    return G_hat, H_hat, hessian_endomorphism(G_hat, H_hat)

