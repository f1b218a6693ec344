"""Checked dense linear algebra used across modules."""

import numpy as np
import scipy.linalg

from .dual import primal
from .errors import InvalidMetric, NumericsError

MAX_CONDITION = 1e12
SPD_SHIFT = 1e-12


def sym(M):
    return 0.5 * (M + M.T)


def check_condition(A, what="matrix"):
    A0 = np.asarray(primal(A), dtype=float)
    if not np.all(np.isfinite(A0)):
        raise NumericsError(f"non-finite {what}")
    cond = np.linalg.cond(A0)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise NumericsError(f"{what} is singular or badly conditioned (cond={cond:.3g})")


def solve(A, b, what="matrix"):
    """LU solve with partial pivoting, refusing condition numbers above 1e12."""
    check_condition(A, what)
    return np.linalg.solve(A, b)


def inv(A, what="matrix"):
    check_condition(A, what)
    return np.linalg.solve(A, np.eye(np.shape(primal(A))[0]))


def check_spd(G, what="metric"):
    """Validate symmetry and positive definiteness (Cholesky of ``G - 1e-12 I``)."""
    G0 = np.asarray(primal(G), dtype=float)
    if G0.ndim != 2 or G0.shape[0] != G0.shape[1]:
        raise InvalidMetric(f"{what} must be a square matrix, got shape {G0.shape}")
    if not np.all(np.isfinite(G0)):
        raise InvalidMetric(f"{what} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(G0))))
    if np.max(np.abs(G0 - G0.T)) > 1e-10 * scale:
        raise InvalidMetric(f"{what} is not symmetric")
    try:
        np.linalg.cholesky(G0 - SPD_SHIFT * np.eye(G0.shape[0]))
    except np.linalg.LinAlgError:
        raise InvalidMetric(f"{what} is not positive definite") from None


def spd_solve(G, b, what="metric"):
    """Cholesky solve for a metric; fails with NumericsError when G is not SPD."""
    try:
        factor = scipy.linalg.cho_factor(G, lower=True)
    except np.linalg.LinAlgError:
        raise NumericsError(f"{what} is not positive definite") from None
    return scipy.linalg.cho_solve(factor, b)
