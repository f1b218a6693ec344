import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import builtin_charts, random_points
from repgeo import calculus, charts
from repgeo.calculus import DomainBox, ScalarField
from repgeo.errors import InvalidChart, InvalidMetric

CHARTS = builtin_charts(2)
seeds = st.integers(0, 2**31 - 1)


def _point(phi, seed):
    return random_points(np.random.default_rng(seed), phi.domain, 1)[0]


def test_identity_chart():
    phi = charts.make_chart("identity", 3)
    x = np.array([0.1, -2.0, 4.0])
    assert np.array_equal(phi(x), x)
    assert np.array_equal(phi.jacobian(x), np.eye(3))


def test_log_chart_at_e():
    phi = charts.make_chart("elementwise_log", 1)
    assert phi([np.e])[0] == pytest.approx(1.0)
    assert phi.jacobian([np.e])[0, 0] == pytest.approx(1.0 / np.e, rel=1e-15)


def test_layer_scale_example():
    phi = charts.make_chart("layer_scale", 2, alpha=2.0, split=1)
    assert np.allclose(phi([3.0, 4.0]), [6.0, 2.0])
    J = phi.jacobian([3.0, 4.0])
    assert np.allclose(J, np.diag([2.0, 0.5]))
    assert np.linalg.det(J) == pytest.approx(1.0)


def test_invalid_charts():
    with pytest.raises(InvalidChart):
        charts.affine([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(InvalidChart):
        charts.layer_scale(0.0, 1, 2)
    with pytest.raises(InvalidChart):
        charts.triangular_poly(2, eps=0.5)
    with pytest.raises(InvalidChart):
        charts.make_chart("spherical", 2)
    with pytest.raises(InvalidChart):
        charts.compose(charts.identity(2), charts.elementwise_log(2))


def test_vector_and_covector_examples():
    phi = charts.elementwise_exp(2)
    theta = np.array([0.0, np.log(2.0)])
    assert np.allclose(charts.pushforward_vector(phi, theta, [1.0, 1.0]), [1.0, 2.0])
    assert np.allclose(charts.pushforward_covector(phi, theta, [1.0, 1.0]), [1.0, 0.5])
    ident = charts.identity(2)
    assert np.allclose(charts.pushforward_vector(ident, theta, [3.0, -1.0]), [3.0, -1.0])
    assert np.allclose(charts.pushforward_covector(ident, theta, [3.0, -1.0]), [3.0, -1.0])


def test_metric_examples():
    phi = charts.elementwise_exp(2)
    theta = np.array([0.0, np.log(2.0)])
    assert np.allclose(charts.pushforward_metric(phi, theta, np.eye(2)), np.diag([1.0, 0.25]))
    G = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert np.allclose(charts.pushforward_metric(charts.identity(2), theta, G), G)
    with pytest.raises(InvalidMetric):
        charts.pushforward_metric(phi, theta, np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_bilinear_examples():
    phi = charts.layer_scale(2.0, 1, 2)
    H = np.array([[2.0, 2.0], [2.0, 2.0]])
    assert np.allclose(charts.pushforward_bilinear(phi, [1.0, 1.0], H), [[0.5, 2.0], [2.0, 8.0]])
    assert np.array_equal(charts.pushforward_bilinear(phi, [1.0, 1.0], np.zeros((2, 2))), np.zeros((2, 2)))


def test_function_examples():
    f = ScalarField(lambda t: t[0] ** 2, 1, DomainBox.positive(1))
    fhat = charts.pushforward_function(charts.elementwise_log(1), f)
    assert fhat([0.0]) == pytest.approx(1.0)
    assert fhat([0.5]) == pytest.approx(np.exp(1.0))
    const = ScalarField(lambda t: 4.0 + 0.0 * t[0], 1)
    assert charts.pushforward_function(charts.softplus(1), const)([0.7]) == 4.0


def test_compose_examples():
    phi = charts.triangular_poly(2, seed=1, eps=0.1)
    x = np.array([0.3, -0.8])
    assert np.allclose(charts.compose(phi, charts.identity(2))(x), phi(x))
    round_trip = charts.compose(charts.elementwise_log(2), charts.elementwise_exp(2))
    assert np.allclose(round_trip([0.5, 3.0]), [0.5, 3.0], rtol=1e-9)
    aff = charts.affine([[1.0, 0.5], [0.0, 2.0]], [0.1, 0.2])
    ex = charts.elementwise_exp(2)
    both = charts.compose(ex, aff)
    assert np.allclose(both.jacobian(x), aff.jacobian(ex(x)) @ ex.jacobian(x), rtol=1e-9)


@pytest.mark.parametrize("kind", sorted(CHARTS))
@given(seed=seeds)
def test_round_trip_and_inverse_jacobian(kind, seed):
    phi = CHARTS[kind]
    theta = _point(phi, seed)
    assert np.allclose(phi.inverse(phi(theta)), theta, rtol=1e-9, atol=1e-12)
    product = phi.jacobian(theta) @ calculus.jacobian(phi.inverse_map(), phi(theta))
    assert np.allclose(product, np.eye(2), atol=1e-8)


@pytest.mark.parametrize("kind", sorted(CHARTS))
@given(seed=seeds)
def test_pairing_invariance(kind, seed):
    phi = CHARTS[kind]
    rng = np.random.default_rng(seed)
    theta = _point(phi, seed)
    v, w = rng.standard_normal(2), rng.standard_normal(2)
    lhs = charts.pushforward_covector(phi, theta, w) @ charts.pushforward_vector(phi, theta, v)
    assert lhs == pytest.approx(w @ v, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("kind", sorted(CHARTS))
@given(seed=seeds)
def test_metric_rules(kind, seed):
    phi = CHARTS[kind]
    rng = np.random.default_rng(seed)
    theta = _point(phi, seed)
    B = rng.standard_normal((2, 2))
    G = B @ B.T + 0.2 * np.eye(2)
    v = rng.standard_normal(2)
    G_hat = charts.pushforward_metric(phi, theta, G)
    v_hat = charts.pushforward_vector(phi, theta, v)
    assert v_hat @ G_hat @ v_hat == pytest.approx(v @ G @ v, rel=1e-9)
    detJ = np.linalg.det(phi.jacobian(theta))
    assert np.linalg.det(G_hat) == pytest.approx(np.linalg.det(G) / detJ**2, rel=1e-9)
    back = charts.pushforward_metric(phi.inverted(), phi(theta), G_hat)
    assert np.allclose(back, G, rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("kind", sorted(CHARTS))
@given(seed=seeds)
def test_covector_rule_is_the_chain_rule(kind, seed):
    phi = CHARTS[kind]
    L = ScalarField(lambda t: np.sin(t[0]) * t[1] + 0.3 * t[1] ** 2, 2)
    theta = _point(phi, seed)
    lhs = calculus.gradient(charts.pushforward_function(phi, L), phi(theta))
    rhs = charts.pushforward_covector(phi, theta, calculus.gradient(L, theta))
    assert np.allclose(lhs, rhs, rtol=1e-8, atol=1e-12)


@pytest.mark.parametrize("kind", sorted(CHARTS))
def test_function_rule_pointwise(kind):
    phi = CHARTS[kind]
    f = ScalarField(lambda t: np.cos(t[0]) + t[0] * t[1], 2)
    fhat = charts.pushforward_function(phi, f)
    for theta in random_points(np.random.default_rng(5), phi.domain, 100):
        assert fhat(phi(theta)) == pytest.approx(f(theta), rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("kind", sorted(CHARTS))
def test_closed_form_logdet_matches_jacobian(kind):
    phi = CHARTS[kind]
    for theta in random_points(np.random.default_rng(11), phi.domain, 10):
        psi = phi(theta)
        expected = -np.linalg.slogdet(phi.jacobian(theta))[1]
        assert phi.log_abs_det_inverse_jacobian(psi) == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_batched_forward_matches_pointwise():
    for phi in CHARTS.values():
        pts = random_points(np.random.default_rng(3), phi.domain, 5)
        batch = phi.forward(pts.T).T
        assert np.allclose(batch, [phi(p) for p in pts])


def test_random_chart_is_reproducible():
    a = charts.random_chart(np.random.default_rng(4), 3)
    b = charts.random_chart(np.random.default_rng(4), 3)
    x = np.array([0.1, 0.2, -0.3])
    assert a.name == b.name
    assert np.array_equal(a(x), b(x))
