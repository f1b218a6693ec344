import numpy as np
import pytest

from helpers import builtin_charts
from repgeo import charts, measures, metrics
from repgeo.calculus import DomainBox, ScalarField
from repgeo.charts import Diffeomorphism
from repgeo.errors import DomainError, InvalidHessian, InvalidMetric, NotAtMAP

CHARTS = builtin_charts(2)
UNIT = DomainBox([0.0], [1.0])
SQUARE = Diffeomorphism("square", np.square, np.sqrt, UNIT, UNIT, elementwise=True)
HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


def test_identity_pushforward_is_unchanged():
    q = measures.gaussian([0.3, -0.2], [[1.0, 0.2], [0.2, 0.5]])
    moved = measures.lebesgue_pushforward(q, charts.identity(2))
    x = np.array([0.1, 0.9])
    assert moved.log_prob(x) == q.log_prob(x)


def test_uniform_under_square():
    moved = measures.lebesgue_pushforward(measures.uniform(UNIT), SQUARE)
    assert moved.pdf(np.array([0.25])) == pytest.approx(1.0, rel=1e-14)
    assert measures.normalizer(moved) == pytest.approx(1.0, rel=1e-3)


def test_lognormal_mode_is_not_the_mapped_mode():
    q = measures.standard_normal(1)
    assert measures.find_mode(q, [0.7])[0] == pytest.approx(0.0, abs=1e-8)
    moved = measures.lebesgue_pushforward(q, charts.elementwise_exp(1))
    mode = measures.find_mode(moved, [0.8])[0]
    assert mode == pytest.approx(np.exp(-1.0), abs=1e-6)
    assert abs(mode - 1.0) > 0.1


def test_riemannian_mode_is_equivariant():
    qG = measures.riemannian_density(measures.standard_normal(1), metrics.euclidean(1))
    moved = measures.riemannian_pushforward(qG, charts.elementwise_exp(1))
    assert measures.find_mode(moved, [0.6])[0] == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("kind", sorted(CHARTS))
def test_pushforward_integrates_to_one(kind):
    phi = CHARTS[kind]
    if kind == "elementwise_log":
        q = measures.uniform(DomainBox([0.5, 1.0], [2.0, 3.0]))
    else:
        q = measures.gaussian([0.2, -0.1], [[0.09, 0.02], [0.02, 0.04]])
    moved = measures.lebesgue_pushforward(q, phi)
    if moved.domain.is_bounded:
        box = moved.domain
    else:
        # the image of a theta box wide enough to carry essentially all the mass
        corners = np.array([[a, b] for a in (-1.5, 1.5) for b in (-1.5, 1.5)])
        images = np.array([phi(c) for c in corners])
        lo = np.maximum(images.min(axis=0) - 0.5, moved.domain.lower)
        box = DomainBox(lo, images.max(axis=0) + 0.5)
    assert measures.normalizer(moved, box, nodes=401) == pytest.approx(1.0, rel=1e-3)


def test_riemannian_density_examples():
    q = measures.gaussian([0.1], [[0.5]])
    same = measures.riemannian_density(q, metrics.euclidean(1))
    assert same.log_prob(np.array([0.4])) == q.log_prob(np.array([0.4]))
    four = metrics.from_callable(lambda t: np.atleast_2d(4.0 + 0.0 * t[0]), 1)
    scaled = measures.riemannian_density(q, four)
    assert scaled.pdf(np.array([0.4])) == pytest.approx(0.5 * q.pdf(np.array([0.4])), rel=1e-14)
    assert measures.normalizer(scaled, DomainBox([-5.0], [5.0])) == pytest.approx(1.0, rel=1e-6)
    bad = metrics.from_callable(lambda t: np.atleast_2d(-1.0 + 0.0 * t[0]), 1)
    with pytest.raises(InvalidMetric):
        measures.riemannian_density(q, bad).log_prob(np.array([0.0]))


@pytest.mark.parametrize("kind", sorted(CHARTS))
def test_riemannian_density_transforms_as_a_function(kind):
    phi = CHARTS[kind]
    center = [1.0, 1.5] if kind == "elementwise_log" else [0.2, -0.3]
    q = measures.gaussian(center, [[0.3, 0.05], [0.05, 0.2]])
    G = metrics.from_callable(lambda t: np.diag(np.stack([1.0 + t[0] ** 2, 2.0 + np.sin(t[1])])), 2)
    qG = measures.riemannian_density(q, G)
    moved = measures.riemannian_pushforward(qG, phi)
    assert moved.is_riemannian
    rng = np.random.default_rng(0)
    for _ in range(20):
        theta = np.asarray(center) + 0.3 * rng.standard_normal(2)
        assert moved.log_prob(phi(theta)) == pytest.approx(qG.log_prob(theta), rel=1e-9)
    mode = measures.find_mode(qG, np.asarray(center) + 0.1)
    assert np.allclose(measures.find_mode(moved, phi(mode) + 0.05), phi(mode), atol=1e-6)


def test_jeffreys_examples():
    constant = measures.jeffreys(metrics.from_callable(lambda t: 3.0 * np.eye(2) + 0.0 * t[0], 2),
                                 DomainBox([0.0, 0.0], [1.0, 2.0]))
    values = [constant.log_prob(np.array(p)) for p in ([0.1, 0.2], [0.9, 1.7])]
    assert values[0] == values[1] == pytest.approx(np.log(3.0))
    # Gaussian-mean model: Fisher X^T X does not depend on theta
    model = metrics.linear_model([[1.0, 0.5], [0.2, -1.0], [0.3, 0.3]], [0.0, 1.0, 0.0])
    flat = measures.jeffreys(metrics.ggn_field(model), DomainBox([-1.0, -1.0], [1.0, 1.0]))
    assert flat.log_prob(np.array([0.5, -0.5])) == pytest.approx(flat.log_prob(np.array([-0.2, 0.9])), rel=1e-14)
    bernoulli = metrics.from_callable(lambda t: np.atleast_2d(1.0 / (t[0] * (1.0 - t[0]))), 1)
    prior = measures.jeffreys(bernoulli, UNIT)
    assert not prior.normalized
    assert measures.normalizer(prior) == pytest.approx(np.pi, abs=1e-3)


def test_quadrature_limits():
    with pytest.raises(ValueError):
        measures.integrate(lambda x: 0.0 * x[0], DomainBox(np.zeros(3), np.ones(3)))
    with pytest.raises(DomainError):
        measures.integrate(lambda x: 0.0 * x[0], DomainBox.real(1))
    with pytest.raises(DomainError):
        measures.uniform(DomainBox.positive(1))
    with pytest.raises(DomainError):
        measures.normalizer(measures.uniform(UNIT), DomainBox([-1.0], [1.0]))


def test_mode_ties_break_lexicographically():
    mix = ScalarField(lambda x: np.logaddexp(-2 * (x[0] - 1) ** 2, -2 * (x[0] + 1) ** 2), 1)
    q = measures.Density(mix, normalized=False)
    mode = measures.find_mode(q, [[0.8], [-0.8]])
    assert mode[0] == pytest.approx(-1.0, abs=1e-3)
    with pytest.raises(DomainError):
        measures.find_mode(measures.uniform(UNIT), [2.0])


def test_laplace_examples():
    k1 = ScalarField(lambda t: 0.5 * t[0] ** 2, 1)
    rep = measures.laplace_log_marginal(k1, [0.0])
    assert rep.log_Z == pytest.approx(HALF_LOG_2PI, abs=1e-12)
    assert rep.log_Z == pytest.approx(0.918939, abs=1e-6)
    assert rep.log_Z == rep.neg_loss_term + rep.remainder_term
    k4 = ScalarField(lambda t: 2.0 * t[0] ** 2, 1)
    assert measures.laplace_log_marginal(k4, [0.0]).log_Z == pytest.approx(0.225792, abs=1e-6)
    assert measures.laplace_log_marginal(k4, [0.0]).log_Z == pytest.approx(HALF_LOG_2PI - np.log(2.0), abs=1e-12)


def test_laplace_under_scaling_chart():
    k1 = ScalarField(lambda t: 0.5 * t[0] ** 2, 1)
    phi = charts.affine([[2.0]])
    assert measures.naive_shift(k1, phi, [0.0]) == pytest.approx(np.log(2.0), abs=1e-9)
    rep = measures.laplace_log_marginal_invariant(k1, phi, [0.0])
    assert rep.log_Z == pytest.approx(HALF_LOG_2PI, abs=1e-9)
    same = measures.laplace_log_marginal_invariant(k1, charts.identity(1), [0.0])
    assert same == measures.laplace_log_marginal(k1, [0.0])


@pytest.mark.parametrize("c", [-0.5, 0.4])
def test_laplace_under_exp_chart(c):
    L = ScalarField(lambda t: 0.5 * np.sum((np.log(t) - c) ** 2) + 0.5 * np.sum(t), 2, DomainBox.positive(2))
    theta = measures.find_mode(measures.Density(ScalarField(lambda t: -L(t), 2, L.domain), normalized=False),
                               [np.exp(c), np.exp(c)])
    phi = charts.elementwise_log(2)
    base = measures.laplace_log_marginal(L, theta)
    invariant = measures.laplace_log_marginal_invariant(L, phi, phi(theta))
    assert invariant.log_Z == pytest.approx(base.log_Z, abs=1e-8)
    naive = measures.laplace_log_marginal_naive(L, phi, phi(theta))
    shift = np.linalg.slogdet(phi.jacobian(theta))[1]
    assert naive.log_Z - base.log_Z == pytest.approx(shift, abs=1e-9)


def test_laplace_errors():
    k1 = ScalarField(lambda t: 0.5 * t[0] ** 2, 1)
    with pytest.raises(NotAtMAP):
        measures.laplace_log_marginal(k1, [0.1])
    saddle = ScalarField(lambda t: t[0] ** 2 - t[1] ** 2, 2)
    with pytest.raises(InvalidHessian):
        measures.laplace_log_marginal(saddle, [0.0, 0.0])


def test_laplace_report_serialization():
    rep = measures.laplace_log_marginal(ScalarField(lambda t: 0.5 * t[0] ** 2 + 1.0, 1), [0.0])
    assert tuple(rep.csv_row()) == measures.LaplaceReport.CSV_FIELDS
    assert rep.to_dict()["theta_map"] == [0.0]
    assert rep.neg_loss_term == -1.0
