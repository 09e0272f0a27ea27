"""Run both encoders over a split and collect metrics."""
import logging
from pathlib import Path

import numpy as np
import torch

from .array import ArrayGeometry
from .baseline import DEFAULT_BETA, apply_static_encoder, design_ls_encoder
from .dataset import BatchLoader
from .dsp import SpectrogramTensor, istft
from .metrics import (GROUPS, MetricCurve, aggregate_report, coherence, magnitude_spectrum_error, si_snr,
                      source_label, write_aggregate_csv, write_curves_csv)
from .neural.train import batch_tensors, predict

log = logging.getLogger(__name__)


def example_metrics(b, b_hat):
    """Magnitude error and coherence curves plus mean SI-SNR for one example."""
    n = b.n_samples
    return {
        "magnitude_error": magnitude_spectrum_error(b, b_hat),
        "coherence": coherence(b, b_hat),
        "si_snr": si_snr(istft(b, n), istft(b_hat, n)).mean,
    }


def evaluate(manifest, root, split="eval", store=None, beta=DEFAULT_BETA, batch=4, variants=None, n_sources=None,
             grid=None):
    """Per-example metrics for the baseline and (if given) the trained network.

    Returns
    -------
    list of dict
        One run per (example, method) with keys ``method``, ``pairing``,
        ``variant``, ``n_sources`` and the metric values.
    """
    loader = BatchLoader(manifest, root, split, batch, fresh_sources=False, shuffle=False, variants=variants,
                         n_sources=n_sources)
    cfg = loader.cfg
    encoders = {}
    runs = []
    if store is not None:
        store.model.eval()
    for bt in loader.epoch(0):
        if store is not None:
            with torch.no_grad():
                x, qg, _ = batch_tensors(bt)
                nn_out, _ = predict(store.model, x, qg)
                nn_out = nn_out.numpy().astype(np.complex128)
        for i, meta in enumerate(bt.meta):
            aid = meta["array_id"]
            if aid not in encoders:
                g = ArrayGeometry.from_record(manifest.array(aid))
                encoders[aid] = design_ls_encoder(g, cfg.order, beta, grid=grid)
            n = int(cfg.excerpt_seconds * cfg.sample_rate)
            x = SpectrogramTensor(bt.x[i], n_samples=n)
            b = SpectrogramTensor(bt.b[i], n_samples=n)
            estimates = {"baseline": apply_static_encoder(encoders[aid], x)}
            if store is not None:
                estimates["proposed"] = b.like(nn_out[i])
            for method, b_hat in estimates.items():
                runs.append({"method": method, **meta, **example_metrics(b, b_hat)})
    return runs


def mean_curves(runs):
    """Average curves per (method, metric, sources, variant)."""
    acc = {}
    for r in runs:
        for metric in ("magnitude_error", "coherence"):
            key = (r["method"], metric, source_label(r["n_sources"]), r["variant"])
            acc.setdefault(key, []).append(r[metric])
    return {k: MetricCurve(v[0].bins, np.mean([c.values for c in v], axis=0)) for k, v in acc.items()}


def write_reports(runs, out, plots=False):
    """Write curves.csv and aggregate.csv (and figures) into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    curves = mean_curves(runs)
    order = {g: i for i, g in enumerate(GROUPS)}
    keys = sorted(curves, key=lambda k: (order.get((k[2], k[3]), 99), k[1], k[0]))
    write_curves_csv({f"{m}_{metric}_{s}_{v}": curves[(m, metric, s, v)] for m, metric, s, v in keys},
                     out / "curves.csv")
    table = aggregate_report(runs)
    write_aggregate_csv(table, out / "aggregate.csv")
    if plots:
        from .plotting import plot_curves
        plot_curves(curves, out / "curves.png")
    return table
