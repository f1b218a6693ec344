"""Experiment drivers.

Each driver takes a resolved config and returns a :class:`Report`.  Every row
carries the config hash and seed, and pairs a "naive" column (recompute in
the new coordinates as if they were the only ones) with a "rule" column
(apply the transformation rule of the object in question).
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .. import calculus, charts, curvature, dynamics, measures, metrics
from ..calculus import DomainBox, ScalarField
from ..errors import ConfigError, InvalidChart, ReparamError
from .config import config_hash
from .data import TanhMLP, generate_sine_dataset, train_mlp

log = logging.getLogger(__name__)


@dataclass
class Report:
    experiment: str
    config: dict
    columns: list
    rows: list = field(default_factory=list)
    plot_data: dict = field(default_factory=dict)

    @property
    def config_hash(self):
        return config_hash(self.config)

    @property
    def seed(self):
        return self.config["seed"]

    def add(self, **values):
        row = {"config_hash": self.config_hash, "seed": self.seed}
        row.update(values)
        missing = set(self.columns) - set(row)
        if missing:
            raise KeyError(f"row lacks columns {sorted(missing)}")
        self.rows.append({c: row[c] for c in self.columns})

    def column(self, name):
        return [r[name] for r in self.rows]


def _cols(*names):
    return ["config_hash", "seed", *names]


# -- builders ----------------------------------------------------------------------

def chart_label(spec):
    params = {k: v for k, v in spec.items() if k != "kind"}
    if not params:
        return spec["kind"]
    inner = ",".join(f"{k}={json.dumps(v, separators=(',', ':'))}" for k, v in sorted(params.items()))
    return f"{spec['kind']}({inner})"


def build_chart(spec, dim, index=0):
    params = {k: v for k, v in spec.items() if k != "kind"}
    try:
        return charts.make_chart(spec["kind"], dim, **params)
    except InvalidChart as exc:
        raise ConfigError(f"charts.{index}", str(exc)) from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"charts.{index}", f"cannot build chart: {exc}") from None


def _loss_dim(spec):
    for key in ("A", "center", "c", "point"):
        if key in spec:
            return len(spec[key])
    return int(spec.get("dim", 2 if spec["kind"] == "dinh" else 1))


def build_loss(spec):
    """Return ``(L, theta_star)`` for the analytic test losses."""
    kind = spec["kind"]
    d = _loss_dim(spec)
    if kind == "dinh":
        if d != 2:
            raise ConfigError("loss.dim", "the (w1 w2 - 1)^2 loss is two-dimensional")
        point = np.asarray(spec.get("point", [1.0, 1.0]), dtype=float)
        return ScalarField(lambda w: (w[0] * w[1] - 1.0) ** 2, 2, name="dinh"), point
    if kind == "quadratic":
        A = np.asarray(spec.get("A", np.eye(d)), dtype=float)
        center = np.asarray(spec.get("center", np.zeros(d)), dtype=float)
        if A.shape != (d, d) or center.shape != (d,):
            raise ConfigError("loss", "A and center have inconsistent dimensions")
        L = ScalarField(lambda t: 0.5 * np.sum((t - center) * (A @ (t - center))), d, name="quadratic")
        return L, np.asarray(spec.get("point", center), dtype=float)
    if kind == "log_quadratic":
        c = np.asarray(spec.get("c", np.zeros(d)), dtype=float)
        return log_quadratic(c), np.exp(c)
    raise ConfigError("loss.kind", f"loss {kind!r} is not available for this experiment")


def log_quadratic(c):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    return ScalarField(lambda t: 0.5 * np.sum((np.log(t) - c) ** 2), c.size, DomainBox.positive(c.size),
                       "log_quadratic")


def build_metric(spec, dim, model=None):
    kind = spec["kind"]
    if kind == "euclidean":
        G = metrics.euclidean(dim)
    elif kind == "conformal":
        eye = np.eye(dim)
        G = metrics.from_callable(lambda t: (1.0 + np.sum(t * t)) * eye, dim, "conformal")
    elif kind in ("ggn", "empirical_fisher"):
        if model is None:
            raise ConfigError("metric.kind", f"{kind} needs the mlp loss")
        G = metrics.ggn_field(model) if kind == "ggn" else metrics.empirical_fisher_field(model)
    else:
        raise ConfigError("metric.kind", f"unknown metric {kind!r}")
    if "damping" in spec:
        G = metrics.damped(G, spec["damping"])
    return G


def _model_and_data(cfg):
    mc = cfg["model"]
    data = generate_sine_dataset(cfg["seed"], m=mc["m"], noise=mc["noise"])
    return TanhMLP(mc["hidden"]), data


# -- sharpness -----------------------------------------------------------------------

_SHARP_COLS = _cols(
    "minimum", "chart", "grad_norm",
    "theta_bilinear_trace", "theta_bilinear_det", "theta_endo_trace", "theta_endo_det",
    "naive_trace", "naive_det", "naive_eig_max", "rule_trace", "rule_det", "rule_eig_max",
)


def _sharpness_rows(report, label, L, G, theta, chart_specs):
    theta = np.asarray(theta, dtype=float)
    H = curvature.riemannian_hessian(L, G, theta)
    Gt = np.asarray(G(theta), dtype=float)
    bil = curvature.sharpness(H, "bilinear")
    endo = curvature.sharpness(H, "endomorphism", metric=Gt)
    gnorm = float(np.linalg.norm(calculus.gradient(L, theta)))
    for i, spec in enumerate(chart_specs):
        phi = build_chart(spec, theta.size, i)
        psi = np.asarray(phi(theta), dtype=float)
        L_psi = charts.pushforward_function(phi, L)
        G_psi = metrics.pushforward_field(phi, G)
        naive = curvature.sharpness(calculus.hessian(L_psi, psi), "bilinear")
        H_psi = curvature.riemannian_hessian(L_psi, G_psi, psi)
        rule = curvature.sharpness(H_psi, "endomorphism", metric=np.asarray(G_psi(psi), dtype=float))
        report.add(
            minimum=label, chart=chart_label(spec), grad_norm=gnorm,
            theta_bilinear_trace=bil.trace, theta_bilinear_det=bil.determinant,
            theta_endo_trace=endo.trace, theta_endo_det=endo.determinant,
            naive_trace=naive.trace, naive_det=naive.determinant, naive_eig_max=naive.eig_max,
            rule_trace=rule.trace, rule_det=rule.determinant, rule_eig_max=rule.eig_max,
        )


def run_sharpness(cfg):
    report = Report("sharpness", cfg, _SHARP_COLS)
    if cfg["loss"]["kind"] != "mlp":
        L, theta = build_loss(cfg["loss"])
        G = build_metric(cfg["metric"], L.dim)
        _sharpness_rows(report, "given", L, G, theta, cfg["charts"])
        return report
    # desk-scale flat-vs-sharp comparison: minima reached with and without Fisher preconditioning
    model, data = _model_and_data(cfg)
    mc = cfg["model"]
    spec = model.spec(data)
    L = spec.loss_field(mc["weight_decay"])
    G = build_metric(cfg["metric"], model.dim, spec)
    curves = {}
    for optimizer in ("gd", "fisher"):
        res = train_mlp(model, data, mc["epochs"], optimizer, mc["lr"], mc["weight_decay"] / data.m,
                        seed=cfg["seed"], fisher_damping=mc["fisher_damping"])
        curves[optimizer] = res.loss_curve
        _sharpness_rows(report, optimizer, L, G, res.theta, cfg["charts"])
    report.plot_data = {"loss_curves": curves}
    return report


# -- flow ------------------------------------------------------------------------------

_FLOW_COLS = _cols("chart", "integrator", "h", "steps", "gap_naive", "gap_rule", "exit_naive", "exit_rule")


def run_flow(cfg):
    report = Report("flow", cfg, _FLOW_COLS)
    L, _ = build_loss(cfg["loss"])
    G = build_metric(cfg["metric"], L.dim)
    G_arg = None if cfg["metric"]["kind"] == "euclidean" and "damping" not in cfg["metric"] else G
    theta0 = np.asarray(cfg["theta0"], dtype=float)
    if theta0.size != L.dim:
        raise ConfigError("theta0", f"expected {L.dim} coordinates")
    integrator, horizon = cfg["integrator"], cfg["horizon"]
    traces = {}
    for i, spec in enumerate(cfg["charts"]):
        phi = build_chart(spec, L.dim, i)
        psi0 = np.asarray(phi(theta0), dtype=float)
        for h in sorted(cfg["step_sizes"], reverse=True):
            steps = max(1, int(round(horizon / h)))
            ref = dynamics.flow(L, G_arg, theta0, h, steps, integrator)
            naive = dynamics.naive_reparam_flow(L, phi, psi0, h, steps, integrator)
            rule = dynamics.equivariant_reparam_flow(L, G_arg, phi, psi0, h, steps, integrator)
            report.add(
                chart=chart_label(spec), integrator=integrator, h=float(h), steps=steps,
                gap_naive=dynamics.equivariance_gap(ref, naive, phi),
                gap_rule=dynamics.equivariance_gap(ref, rule, phi),
                exit_naive=-1 if naive.exit_step is None else naive.exit_step,
                exit_rule=-1 if rule.exit_step is None else rule.exit_step,
            )
            traces[chart_label(spec)] = {
                "times": ref.times, "mapped": phi.forward(ref.points.T).T,
                "naive": naive.points, "rule": rule.points, "h": h,
            }
    report.plot_data = {"trajectories": traces}
    return report


# -- density ---------------------------------------------------------------------------

def run_density(cfg):
    dens = cfg["density"]
    mean = np.asarray(dens["mean"], dtype=float)
    d = mean.size
    coords = lambda prefix: [f"{prefix}_{k + 1}" for k in range(d)]
    report = Report("density", cfg, _cols("chart", *coords("mode_theta"), *coords("mapped_mode"),
                                          *coords("naive_mode"), *coords("rule_mode"),
                                          "naive_error", "rule_error"))
    q = measures.gaussian(mean, dens["cov"])
    G = metrics.euclidean(d)
    mode = measures.find_mode(q, mean)
    curves = {}
    for i, spec in enumerate(cfg["charts"]):
        phi = build_chart(spec, d, i)
        target = np.asarray(phi(mode), dtype=float)
        q_naive = measures.lebesgue_pushforward(q, phi)
        q_rule = measures.riemannian_pushforward(measures.riemannian_density(q, G), phi)
        naive_mode = measures.find_mode(q_naive, target)
        rule_mode = measures.find_mode(q_rule, target)
        row = {"chart": chart_label(spec),
               "naive_error": float(np.linalg.norm(naive_mode - target)),
               "rule_error": float(np.linalg.norm(rule_mode - target))}
        for name, vec in (("mode_theta", mode), ("mapped_mode", target), ("naive_mode", naive_mode),
                          ("rule_mode", rule_mode)):
            row.update({f"{name}_{k + 1}": float(v) for k, v in enumerate(vec)})
        report.add(**row)
        if d == 1:
            curves[chart_label(spec)] = _density_curves(q_naive, q_rule, target, naive_mode)
    report.plot_data = {"densities": curves}
    return report


def _density_curves(q_naive, q_rule, target, naive_mode):
    box = q_naive.domain
    lo = max(float(box.lower[0]), float(min(target[0], naive_mode[0])) - 3.0)
    hi = min(float(box.upper[0]), float(max(target[0], naive_mode[0])) + 3.0)
    eps = 1e-6 * (hi - lo)
    grid = np.linspace(lo + eps, hi - eps, 400)
    naive = np.array([float(q_naive.pdf(np.array([g]))) for g in grid])
    rule = np.array([float(q_rule.pdf(np.array([g]))) for g in grid])
    return {"grid": grid, "naive": naive, "rule": rule, "target": float(target[0]),
            "naive_mode": float(naive_mode[0])}


# -- laplace ---------------------------------------------------------------------------

_LAPLACE_COLS = _cols("chart", "log_Z_theta", "neg_L", "rest", "log_Z_naive", "log_Z_rule",
                      "delta_naive", "delta_rule", "log_abs_det_J")


def run_laplace(cfg):
    report = Report("laplace", cfg, _LAPLACE_COLS)
    L, theta = build_loss(cfg["loss"])
    base = measures.laplace_log_marginal(L, theta)
    for i, spec in enumerate(cfg["charts"]):
        phi = build_chart(spec, L.dim, i)
        psi = np.asarray(phi(theta), dtype=float)
        naive = measures.laplace_log_marginal_naive(L, phi, psi)
        rule = measures.laplace_log_marginal_invariant(L, phi, psi)
        logdet = float(np.linalg.slogdet(phi.jacobian(theta))[1])
        report.add(chart=chart_label(spec), log_Z_theta=base.log_Z, neg_L=base.neg_loss_term,
                   rest=base.remainder_term, log_Z_naive=naive.log_Z, log_Z_rule=rule.log_Z,
                   delta_naive=naive.log_Z - base.log_Z, delta_rule=rule.log_Z - base.log_Z,
                   log_abs_det_J=logdet)
    return report


# -- newton ----------------------------------------------------------------------------

_NEWTON_COLS = _cols("trial", "chart", "c", "target", "steps_naive", "theta_naive", "steps_rule",
                     "theta_rule", "error_naive", "error_rule")


def _newton_or_fail(L, x0, max_steps):
    try:
        x, steps, traj = dynamics.newton_minimize(L, x0, max_steps)
        return x, steps, traj.points
    except ReparamError as exc:
        log.info("Newton failed: %s", exc)
        return None, -1, None


def run_newton(cfg):
    """Newton on ``1/2 (log theta - c)^2`` in theta and in the configured chart.

    "naive" iterates in theta-coordinates, "rule" iterates in psi-coordinates
    where the loss is exactly quadratic; one step suffices there.
    """
    report = Report("newton", cfg, _NEWTON_COLS)
    loss = cfg["loss"]
    if loss["kind"] != "log_quadratic" or _loss_dim(loss) != 1:
        raise ConfigError("loss.kind", "the newton experiment uses the 1-D log_quadratic loss")
    rng = np.random.default_rng(cfg["seed"])
    cs = loss["c"] if "c" in loss else rng.uniform(-2.0, 2.0, size=cfg["trials"]).tolist()
    theta0 = np.asarray(cfg["theta0"], dtype=float)
    spec = cfg["charts"][0]
    phi = build_chart(spec, 1, 0)
    paths = []
    for trial, c in enumerate(cs):
        L = log_quadratic([c])
        target = float(np.exp(c))
        th, n_th, p_th = _newton_or_fail(L, theta0, cfg["max_steps"])
        ps, n_ps, p_ps = _newton_or_fail(charts.pushforward_function(phi, L), phi(theta0), cfg["max_steps"])
        th_val = float("nan") if th is None else float(th[0])
        ps_val = float("nan") if ps is None else float(phi.inverse(ps)[0])
        report.add(trial=trial, chart=chart_label(spec), c=float(c), target=target,
                   steps_naive=n_th, theta_naive=th_val, steps_rule=n_ps, theta_rule=ps_val,
                   error_naive=abs(th_val - target), error_rule=abs(ps_val - target))
        paths.append({"c": float(c), "theta": p_th, "psi": None if p_ps is None else phi.inverse(p_ps.T).T})
    report.plot_data = {"paths": paths}
    return report


# -- metric-transform -------------------------------------------------------------------

_MT_COLS = _cols("chart", "metric", "elementwise", "frobenius", "rel_error_naive", "rel_error_rule", "holds")


def _family_b_weight(f, x, y):
    # depends on the output only, so it transforms like a function
    return np.atleast_2d(1.0 + np.asarray(f, dtype=float) ** 2)


def _metric_in(model, kind, theta, lam):
    if kind == "ggn":
        return metrics.ggn(model, theta)
    if kind == "empirical_fisher":
        return metrics.empirical_fisher(model, theta)
    if kind == "family_b":
        return metrics.family_b(model, _family_b_weight, theta)
    if kind == "ggn_diag":
        return np.diag(np.diagonal(metrics.ggn(model, theta)))
    if kind == "damped_ggn":
        return metrics.ggn(model, theta) + lam * np.eye(model.dim)
    raise ConfigError("metrics", f"unknown metric {kind!r}")


def run_metric_transform(cfg):
    """Check ``G`` recomputed in psi-coordinates against two predictions.

    "naive" carries the theta-side matrix over unchanged; "rule" applies
    ``J^{-T} G J^{-1}``.  Errors are relative to the recomputed metric.
    """
    report = Report("metric-transform", cfg, _MT_COLS)
    model_obj, data = _model_and_data(cfg)
    model = model_obj.spec(data)
    theta = model_obj.init(cfg["seed"])
    lam = cfg["damping"]
    for i, spec in enumerate(cfg["charts"]):
        phi = build_chart(spec, model.dim, i)
        psi = np.asarray(phi(theta), dtype=float)
        model_psi = metrics.reparametrize(model, phi)
        for kind in cfg["metrics"]:
            recomputed = _metric_in(model_psi, kind, psi, lam)
            G = _metric_in(model, kind, theta, lam)
            rule = charts.pushforward_bilinear(phi, theta, G)
            scale = float(np.linalg.norm(recomputed))
            err_naive = float(np.linalg.norm(recomputed - G)) / scale
            err_rule = float(np.linalg.norm(recomputed - rule)) / scale
            report.add(chart=chart_label(spec), metric=kind, elementwise=bool(phi.elementwise),
                       frobenius=scale, rel_error_naive=err_naive, rel_error_rule=err_rule,
                       holds=bool(err_rule <= 1e-8))
    return report


RUNNERS = {
    "sharpness": run_sharpness,
    "flow": run_flow,
    "density": run_density,
    "laplace": run_laplace,
    "newton": run_newton,
    "metric-transform": run_metric_transform,
}


def run(cfg):
    return RUNNERS[cfg["experiment"]](cfg)
