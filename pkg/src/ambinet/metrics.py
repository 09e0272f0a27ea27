"""Encoding quality metrics and Table-style aggregation."""
import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InputError

log = logging.getLogger(__name__)

MAGNITUDE_FLOOR = 1e-9
SI_SNR_CEILING = 120.0
METRICS = ("si_snr", "coherence", "magnitude_error")
GROUPS = (("single", "dry"), ("single", "wet"), ("dual", "dry"), ("dual", "wet"))
METRIC_LABELS = {"si_snr": "SI-SNR", "coherence": "Coherence", "magnitude_error": "Magnitude Error"}


@dataclass
class MetricCurve:
    bins: np.ndarray  # Hz
    values: np.ndarray

    def mean(self):
        return float(np.mean(self.values))


def _data(x):
    return x.data if hasattr(x, "data") else np.asarray(x)


def _pair(b, b_hat):
    b, b_hat = _data(b), _data(b_hat)
    if b.shape != b_hat.shape:
        raise FormatError(f"shape mismatch {b.shape} vs {b_hat.shape}")
    return b, b_hat


def _bins(b, n_bins):
    if hasattr(b, "bin_frequencies"):
        return b.bin_frequencies()
    return np.arange(n_bins, dtype=float)


def magnitude_spectrum_error(b, b_hat, floor=MAGNITUDE_FLOOR):
    """Mean absolute log-magnitude ratio in dB per bin, over channels and frames."""
    rb, rh = _pair(b, b_hat)
    ratio = np.maximum(np.abs(rb), floor) / np.maximum(np.abs(rh), floor)
    vals = np.mean(np.abs(20 * np.log10(ratio)), axis=(0, 2))
    return MetricCurve(_bins(b, rb.shape[1]), vals)


def coherence(b, b_hat):
    """Magnitude-squared coherence over time per bin, averaged over channels.

    A bin where both signals are silent counts as fully coherent; a bin where
    only one of them is silent counts as 0.
    """
    rb, rh = _pair(b, b_hat)
    num = np.abs(np.sum(np.conj(rb) * rh, axis=2)) ** 2
    eb = np.sum(np.abs(rb) ** 2, axis=2)
    eh = np.sum(np.abs(rh) ** 2, axis=2)
    den = eb * eh
    both_silent = (eb == 0) & (eh == 0)
    c = np.divide(num, den, out=np.where(both_silent, 1.0, 0.0), where=den > 0)
    return MetricCurve(_bins(b, rb.shape[1]), np.clip(np.mean(c, axis=0), 0.0, 1.0))


@dataclass
class SiSnrResult:
    per_channel: np.ndarray  # NaN for excluded channels
    excluded: list

    @property
    def mean(self):
        valid = self.per_channel[~np.isnan(self.per_channel)]
        return float(np.mean(valid)) if valid.size else float("nan")


def si_snr(s, s_hat, ceiling=SI_SNR_CEILING):
    """Scale-invariant SNR in dB per channel of [channels, samples] signals.

    Channels with an all-zero reference are excluded and listed in
    ``excluded``.
    """
    s = np.atleast_2d(np.asarray(s, dtype=float))
    s_hat = np.atleast_2d(np.asarray(s_hat, dtype=float))
    if s.shape != s_hat.shape:
        raise FormatError(f"shape mismatch {s.shape} vs {s_hat.shape}")
    out = np.full(s.shape[0], np.nan)
    excluded = []
    for c in range(s.shape[0]):
        ref_energy = np.dot(s[c], s[c])
        if ref_energy == 0:
            excluded.append(c)
            continue
        target = np.dot(s_hat[c], s[c]) / ref_energy * s[c]
        noise = s_hat[c] - target
        t_e, n_e = np.dot(target, target), np.dot(noise, noise)
        if n_e == 0:
            out[c] = ceiling
        elif t_e == 0:
            out[c] = -ceiling
        else:
            out[c] = float(np.clip(10 * np.log10(t_e / n_e), -ceiling, ceiling))
    if excluded:
        log.warning("SI-SNR: silent reference channels %s excluded", excluded)
    return SiSnrResult(out, excluded)


def source_label(n_sources):
    return {1: "single", 2: "dual"}.get(int(n_sources), f"{int(n_sources)}src")


def aggregate_report(runs):
    """Frequency-averaged means per (method, source count, dry/wet) group.

    Each run is a mapping with keys ``method``, ``n_sources``, ``variant``
    and the metric values: ``si_snr`` (float, dB), ``coherence`` and
    ``magnitude_error`` (MetricCurve or per-bin arrays).

    Returns
    -------
    dict
        ``table[metric][method][(sources, variant)] -> float``.
    """
    if not runs:
        raise InputError("no runs to aggregate")
    acc = {}
    for r in runs:
        key = (source_label(r["n_sources"]), r["variant"])
        for m in METRICS:
            v = r[m]
            v = v.mean() if isinstance(v, MetricCurve) else float(np.mean(v))
            acc.setdefault(m, {}).setdefault(r["method"], {}).setdefault(key, []).append(v)
    table = {}
    for m, by_method in acc.items():
        for method, cells in by_method.items():
            table.setdefault(m, {})[method] = {k: float(np.mean(v)) for k, v in cells.items()}
    methods = sorted({r["method"] for r in runs})
    for g in GROUPS:
        if not any(g in table["si_snr"].get(meth, {}) for meth in methods):
            log.warning("aggregate: group %s/%s has no runs, omitted", *g)
    return table


def _methods_in_order(table):
    seen = []
    for m in METRICS:
        for meth in table.get(m, {}):
            if meth not in seen:
                seen.append(meth)
    return seen


def write_aggregate_csv(table, path, precision=4):
    """Rows of (metric, method) and one column per source-count/dry-wet group."""
    groups = [g for g in GROUPS if any(g in cells for t in table.values() for cells in t.values())]
    extra = sorted({g for t in table.values() for cells in t.values() for g in cells} - set(groups))
    groups += extra
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["metric", "method"] + [f"{s}_{v}" for s, v in groups])
        for m in METRICS:
            for meth in _methods_in_order(table):
                cells = table.get(m, {}).get(meth)
                if cells is None:
                    continue
                w.writerow([METRIC_LABELS[m], meth] + [
                    "" if g not in cells else f"{cells[g]:.{precision}f}" for g in groups])


def write_curves_csv(curves, path, precision=6):
    """Per-bin curves; ``curves`` maps column name -> MetricCurve sharing one bin axis."""
    names = list(curves)
    if not names:
        raise InputError("no curves to write")
    bins = curves[names[0]].bins
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["bin_hz"] + names)
        for k, hz in enumerate(bins):
            w.writerow([f"{hz:.3f}"] + [f"{curves[n].values[k]:.{precision}f}" for n in names])
