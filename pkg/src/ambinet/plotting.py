"""Static figures of per-frequency metric curves."""
import matplotlib as mpl

mpl.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "axes.labelsize": 9,
    "font.size": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
}
LINESTYLE = {"single": "-", "dual": "--"}
YLABEL = {"magnitude_error": "magnitude error (dB)", "coherence": "coherence"}


def plot_curves(curves, path, metrics=("magnitude_error", "coherence")):
    """Grid of metric (rows) by dry/wet (columns) curves over frequency.

    ``curves`` maps (method, metric, sources, variant) to MetricCurve.
    """
    variants = sorted({k[3] for k in curves})
    methods = sorted({k[0] for k in curves})
    colors = {m: f"C{i}" for i, m in enumerate(methods)}
    with mpl.rc_context(STYLE):
        fig, axes = plt.subplots(len(metrics), len(variants), figsize=(3.2 * len(variants), 2.4 * len(metrics)),
                                 sharex=True, squeeze=False)
        for (method, metric, sources, variant), curve in sorted(curves.items()):
            if metric not in metrics:
                continue
            ax = axes[metrics.index(metric), variants.index(variant)]
            ax.plot(curve.bins / 1000, curve.values, LINESTYLE.get(sources, ":"), color=colors[method],
                    label=f"{method} {sources}")
        for r, metric in enumerate(metrics):
            axes[r, 0].set_ylabel(YLABEL.get(metric, metric))
            for c, variant in enumerate(variants):
                if r == 0:
                    axes[r, c].set_title(variant)
                if metric == "coherence":
                    axes[r, c].set_ylim(0, 1.02)
        for ax in axes[-1]:
            ax.set_xlabel("frequency (kHz)")
        axes[0, -1].legend(loc="best")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_loss(trace, path):
    steps = [s for s, _ in trace]
    losses = [l for _, l in trace]
    with mpl.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 2.6))
        ax.semilogy(steps, losses)
        ax.set_xlabel("step")
        ax.set_ylabel("complex L1 loss")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
