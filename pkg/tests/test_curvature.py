import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import TEST_LOSSES, builtin_charts, located_minimum, random_points
from repgeo import calculus, charts, curvature, metrics
from repgeo.calculus import DomainBox, ScalarField
from repgeo.errors import InvalidMetric, NumericsError

CHARTS = builtin_charts(2)
POLAR = metrics.from_callable(lambda t: np.diag(np.stack([1.0 + 0.0 * t[0], t[0] ** 2])), 2, "polar")
WARPED = metrics.from_callable(
    lambda t: np.stack([np.stack([2.0 + np.sin(t[0]), 0.3 * t[1]]),
                        np.stack([0.3 * t[1], 1.5 + t[0] ** 2])]), 2, "warped")
DINH = ScalarField(lambda w: (w[0] * w[1] - 1.0) ** 2, 2, name="dinh")


def _spd(rng, d=2):
    B = rng.standard_normal((d, d))
    return B @ B.T + 0.3 * np.eye(d)


def test_christoffel_vanishes_for_constant_metric():
    assert np.array_equal(curvature.christoffel(metrics.euclidean(2), [0.3, 0.4]), np.zeros((2, 2, 2)))


def test_christoffel_polar():
    r = 1.7
    expected = np.zeros((2, 2, 2))
    expected[0, 1, 1] = -r
    expected[1, 0, 1] = expected[1, 1, 0] = 1.0 / r
    assert np.allclose(curvature.christoffel(POLAR, [r, 0.4]), expected, rtol=1e-14, atol=1e-15)


def test_christoffel_one_dimensional():
    g = metrics.from_callable(lambda t: np.atleast_2d(np.exp(2 * t[0]) + t[0] ** 2), 1)
    x = 0.6
    gx, dg = np.exp(2 * x) + x * x, 2 * np.exp(2 * x) + 2 * x
    assert curvature.christoffel(g, [x])[0, 0, 0] == pytest.approx(dg / (2 * gx), rel=1e-14)


def test_christoffel_fd_path_for_opaque_metrics():
    opaque = metrics.from_callable(lambda t: np.asarray(WARPED(np.asarray(t, dtype=float))), 2,
                                   differentiable=False)
    x = np.array([0.4, -0.7])
    assert np.allclose(curvature.christoffel(opaque, x), curvature.christoffel(WARPED, x), atol=1e-8)


def test_christoffel_singular_metric():
    with pytest.raises(NumericsError):
        curvature.christoffel(POLAR, [0.0, 0.4])


@given(x=st.tuples(st.floats(-2, 2), st.floats(-2, 2)))
def test_christoffel_is_symmetric(x):
    Gamma = curvature.christoffel(WARPED, np.array(x))
    assert np.array_equal(Gamma, Gamma.transpose(0, 2, 1))


def test_riemannian_hessian_euclidean_is_plain_hessian():
    for L, start in TEST_LOSSES.values():
        x = np.asarray(start, dtype=float) + 0.3
        assert np.array_equal(curvature.riemannian_hessian(L, metrics.euclidean(2), x), calculus.hessian(L, x))


@pytest.mark.parametrize("name", sorted(TEST_LOSSES))
def test_riemannian_hessian_at_minimum(name):
    L, theta = located_minimum(name)
    assert np.linalg.norm(calculus.gradient(L, theta)) <= 1e-10
    H, skipped = curvature.riemannian_hessian(L, WARPED, theta, full_output=True)
    assert skipped
    assert np.allclose(H, calculus.hessian(L, theta), rtol=0, atol=1e-8)


@pytest.mark.parametrize("kind", sorted(CHARTS))
def test_riemannian_hessian_transforms_like_a_metric(kind):
    phi = CHARTS[kind]
    L = ScalarField(lambda t: np.sin(t[0]) * t[1] + 0.4 * t[1] ** 2 + 0.1 * t[0] ** 3, 2, phi.domain)
    G = metrics.from_callable(lambda t: np.diag(np.stack([1.0 + t[0] ** 2, 2.0 + np.cos(t[1])])), 2)
    L_hat = charts.pushforward_function(phi, L)
    G_hat = metrics.pushforward_field(phi, G)
    for theta in random_points(np.random.default_rng(9), phi.domain, 4):
        H, skipped = curvature.riemannian_hessian(L, G, theta, full_output=True)
        assert not skipped
        lhs = curvature.riemannian_hessian(L_hat, G_hat, phi(theta))
        rhs = charts.pushforward_bilinear(phi, theta, H)
        assert np.allclose(lhs, rhs, rtol=1e-6, atol=1e-9 * np.max(np.abs(rhs)))


def test_plain_hessian_does_not_transform_away_from_minima():
    phi = charts.elementwise_exp(2)
    L = ScalarField(lambda t: np.sin(t[0]) * t[1] + 0.4 * t[1] ** 2, 2)
    theta = np.array([0.3, 0.5])
    lhs = calculus.hessian(charts.pushforward_function(phi, L), phi(theta))
    rhs = charts.pushforward_bilinear(phi, theta, calculus.hessian(L, theta))
    assert np.max(np.abs(lhs - rhs)) > 1e-2


def test_endomorphism_examples():
    H = np.array([[3.0, 1.0], [1.0, -2.0]])
    assert np.array_equal(curvature.hessian_endomorphism(np.eye(2), H), H)
    assert np.array_equal(curvature.hessian_endomorphism(2 * np.eye(2), H), H / 2)
    with pytest.raises(InvalidMetric):
        curvature.hessian_endomorphism(np.array([[1.0, 2.0], [2.0, 1.0]]), H)


def test_dinh_example():
    w = np.array([1.0, 1.0])
    H = calculus.hessian(DINH, w)
    assert np.array_equal(H, [[2.0, 2.0], [2.0, 2.0]])
    rep = curvature.sharpness(H)
    assert rep.trace == 4.0 and rep.determinant == 0.0
    phi = charts.layer_scale(2.0, 1, 2)
    H_hat = charts.pushforward_bilinear(phi, w, H)
    assert curvature.sharpness(H_hat).trace == pytest.approx(8.5)
    G_hat, _, E_hat = curvature.transformed_endomorphism(phi, w, np.eye(2), H)
    inv = curvature.sharpness(H_hat, "endomorphism", metric=G_hat)
    assert inv.trace == pytest.approx(4.0, rel=1e-12)
    assert inv.determinant == pytest.approx(0.0, abs=1e-12)
    assert curvature.sharpness(E_hat, "endomorphism").trace == pytest.approx(4.0, rel=1e-12)


def test_sharpness_report_serialization():
    rep = curvature.sharpness(np.diag([3.0, 1.0]))
    assert rep.eigenvalues == (1.0, 3.0)
    row = rep.csv_row()
    assert row["kind"] == "bilinear" and row["trace"] == 4.0 and row["eig_max"] == 3.0
    assert row["det"] == pytest.approx(3.0, rel=1e-15)
    assert rep.to_dict()["eigenvalues"] == [1.0, 3.0]
    assert tuple(rep.csv_row()) == curvature.SharpnessReport.CSV_FIELDS


def test_sharpness_errors():
    with pytest.raises(NumericsError):
        curvature.sharpness(np.array([[0.0, -1.0], [1.0, 0.0]]), "endomorphism")
    with pytest.raises(ValueError):
        curvature.sharpness(np.ones((2, 3)))
    with pytest.raises(ValueError):
        curvature.sharpness(np.eye(2), "shape_operator")


@pytest.mark.parametrize("name", sorted(TEST_LOSSES))
@settings(max_examples=15)
@given(seed=st.integers(0, 2**31 - 1))
def test_endomorphism_spectrum_is_invariant(name, seed):
    rng = np.random.default_rng(seed)
    L, theta = located_minimum(name)
    phi = charts.random_chart(rng, 2)
    if not phi.domain.contains(theta):
        phi = charts.affine(np.eye(2) + 0.3 * rng.standard_normal((2, 2)), rng.standard_normal(2))
    G = _spd(rng)
    H = calculus.hessian(L, theta)
    E = curvature.hessian_endomorphism(G, H)
    G_hat, H_hat, E_hat = curvature.transformed_endomorphism(phi, theta, G, H)
    before = curvature.sharpness(H, "endomorphism", metric=G)
    after = curvature.sharpness(H_hat, "endomorphism", metric=G_hat)
    assert np.allclose(after.eigenvalues, before.eigenvalues, rtol=1e-7)
    assert after.trace == pytest.approx(before.trace, rel=1e-7)
    assert after.determinant == pytest.approx(before.determinant, rel=1e-7)
    J = phi.jacobian(theta)
    assert np.allclose(E_hat, J @ E @ np.linalg.inv(J), rtol=1e-8, atol=1e-10 * np.max(np.abs(E)))
    detJ = np.linalg.det(J)
    assert np.linalg.det(H_hat) == pytest.approx(np.linalg.det(H) / detJ**2, rel=1e-8)


def test_positive_domain_loss_under_log_chart():
    L = ScalarField(lambda t: np.sum((np.log(t) - 0.2) ** 2), 2, DomainBox.positive(2))
    theta = np.full(2, np.exp(0.2))
    phi = charts.elementwise_log(2)
    H = calculus.hessian(L, theta)
    before = curvature.sharpness(H, "endomorphism", metric=np.eye(2))
    G_hat, H_hat, _ = curvature.transformed_endomorphism(phi, theta, np.eye(2), H)
    after = curvature.sharpness(H_hat, "endomorphism", metric=G_hat)
    assert np.allclose(after.eigenvalues, before.eigenvalues, rtol=1e-12)
    assert curvature.sharpness(H_hat).trace != pytest.approx(before.trace)
