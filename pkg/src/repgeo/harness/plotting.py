"""SVG figures for experiment reports (matplotlib, Agg backend).

The SVG hash salt is fixed and the date metadata dropped so that figures are
reproducible byte for byte, like the tables they accompany.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "repgeo", "svg.fonttype": "none", "figure.figsize": (6.4, 4.0)}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_flow(report, path):
    rows = report.rows
    with plt.rc_context(_RC):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 4))
        for chart in dict.fromkeys(r["chart"] for r in rows):
            sub = [r for r in rows if r["chart"] == chart]
            h = [r["h"] for r in sub]
            ax0.loglog(h, [max(r["gap_naive"], 1e-18) for r in sub], "o--", label=f"naive, {chart}")
            ax0.loglog(h, [max(r["gap_rule"], 1e-18) for r in sub], "s-", label=f"rule, {chart}")
        ax0.set_xlabel("step size h")
        ax0.set_ylabel("max |phi(theta_t) - psi_t|")
        ax0.legend(fontsize=7)
        chart, tr = next(iter(report.plot_data["trajectories"].items()))
        t = tr["times"]
        ax1.plot(t, tr["mapped"][:, 0], "k-", label="phi(theta_t)")
        ax1.plot(t[:len(tr["naive"])], tr["naive"][:, 0], "--", label="naive psi_t")
        ax1.plot(t[:len(tr["rule"])], tr["rule"][:, 0], ":", label="rule psi_t")
        ax1.set_xlabel("t")
        ax1.set_ylabel("psi_1")
        ax1.set_title(f"{chart}, h={tr['h']:g}", fontsize=9)
        ax1.legend(fontsize=7)
        return _save(fig, path)


def plot_density(report, path):
    curves = report.plot_data.get("densities", {})
    if not curves:
        return None
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(curves), figsize=(5 * len(curves), 4), squeeze=False)
        for ax, (chart, c) in zip(axes[0], curves.items()):
            ax.plot(c["grid"], c["naive"], label="Lebesgue pushforward")
            ax.plot(c["grid"], c["rule"], label="Riemannian density")
            ax.axvline(c["target"], color="k", lw=0.8, label="phi(mode)")
            ax.axvline(c["naive_mode"], color="C0", ls="--", lw=0.8, label="naive mode")
            ax.set_title(chart, fontsize=9)
            ax.set_xlabel("psi")
            ax.legend(fontsize=7)
        return _save(fig, path)


def plot_sharpness(report, path):
    rows = report.rows
    labels = [f"{r['minimum']}\n{r['chart']}" for r in rows]
    x = np.arange(len(rows))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.bar(x - 0.3, [r["theta_bilinear_trace"] for r in rows], 0.2, label="tr H (theta)")
        ax.bar(x - 0.1, [r["naive_trace"] for r in rows], 0.2, label="tr H (psi, naive)")
        ax.bar(x + 0.1, [r["theta_endo_trace"] for r in rows], 0.2, label="tr E (theta)")
        ax.bar(x + 0.3, [r["rule_trace"] for r in rows], 0.2, label="tr E (psi, rule)")
        ax.set_xticks(x, labels, fontsize=7)
        ax.set_yscale("symlog")
        ax.legend(fontsize=7)
        return _save(fig, path)


def plot_newton(report, path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for i, p in enumerate(report.plot_data.get("paths", [])):
            target = np.exp(p["c"])
            for key, style in (("theta", "--"), ("psi", "-")):
                pts = p[key]
                if pts is not None:
                    err = np.maximum(np.abs(pts[:, 0] - target), 1e-17)
                    ax.semilogy(np.arange(len(err)), err, style, color=f"C{i % 10}",
                                label=f"{'naive' if key == 'theta' else 'rule'}, c={p['c']:.2f}" if i < 3 else None)
        ax.set_xlabel("Newton step")
        ax.set_ylabel("|theta_k - e^c|")
        ax.legend(fontsize=7)
        return _save(fig, path)


def plot_bars(report, path, naive, rule, label_cols):
    rows = report.rows
    x = np.arange(len(rows))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.bar(x - 0.2, [abs(r[naive]) for r in rows], 0.4, label=naive)
        ax.bar(x + 0.2, [abs(r[rule]) for r in rows], 0.4, label=rule)
        ax.set_xticks(x, ["\n".join(str(r[c]) for c in label_cols) for r in rows], fontsize=6)
        ax.set_yscale("symlog", linthresh=1e-12)
        ax.legend(fontsize=7)
        return _save(fig, path)


def plot_loss_curves(curves, path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for name, curve in curves.items():
            ax.semilogy(curve, label=name)
        ax.set_xlabel("epoch")
        ax.set_ylabel("training loss")
        ax.legend(fontsize=7)
        return _save(fig, path)


def plot_report(report, path):
    """Write the figure for ``report`` to ``path``; returns the written paths."""
    kind = report.experiment
    written = []
    if kind == "flow":
        written.append(plot_flow(report, path))
    elif kind == "density":
        written.append(plot_density(report, path))
    elif kind == "sharpness":
        written.append(plot_sharpness(report, path))
        if "loss_curves" in report.plot_data:
            written.append(plot_loss_curves(report.plot_data["loss_curves"], path.replace(".svg", "_loss.svg")))
    elif kind == "newton":
        written.append(plot_newton(report, path))
    elif kind == "laplace":
        written.append(plot_bars(report, path, "delta_naive", "delta_rule", ["chart"]))
    elif kind == "metric-transform":
        written.append(plot_bars(report, path, "rel_error_naive", "rel_error_rule", ["chart", "metric"]))
    return [p for p in written if p]
