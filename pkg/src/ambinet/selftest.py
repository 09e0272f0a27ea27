"""Seconds-long sanity checks that exercise each module without a dataset."""
import numpy as np

from .array import ArrayGeometry, atf_matrix, dequantize_geometry, quantize_geometry, sample_geometry
from .baseline import apply_static_encoder, design_ls_encoder
from .dsp import istft, stft
from .metrics import coherence
from .sh import sh_matrix, uniform_grid


def _sh_orthogonality():
    grid = uniform_grid(1008)
    y = sh_matrix(grid.azimuth, grid.elevation, 3, "N3D")
    gram = (y * grid.weights) @ y.T / (4 * np.pi)
    err = np.abs(gram - np.eye(len(gram))).max()
    return err < 1e-2, f"N3D Gram deviation {err:.2e}"


def _stft_roundtrip():
    x = np.random.default_rng(0).standard_normal((2, 48000))
    err = np.abs(istft(stft(x), 48000) - x).max()
    return err < 1e-10, f"max abs error {err:.2e}"


def _quantize_roundtrip():
    g = sample_geometry(np.random.default_rng(0), 5)
    back = dequantize_geometry(quantize_geometry(g))
    err = np.abs(back - g.coords).max()
    return err <= 0.18 / 48 + 1e-12, f"max coordinate error {err * 1000:.2f} mm"


def _tetra_encoder():
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / np.sqrt(3)
    g = ArrayGeometry(0.042 * v)
    enc = design_ls_encoder(g)
    rng = np.random.default_rng(1)
    az, el = rng.uniform(0, 2 * np.pi), rng.uniform(-1, 1)
    s = stft(rng.standard_normal((1, 24000)))
    h = atf_matrix(g, s.bin_frequencies(), [az], [el])[:, :, 0]
    x = s.like(h.T[:, :, None] * s.data)
    b = s.like(sh_matrix([az], [el], 1)[:, :, None] * s.data)
    coh = coherence(b, apply_static_encoder(enc, x))
    band = (coh.bins >= 200) & (coh.bins <= 800)
    lo = float(np.mean(coh.values[band]))
    return lo >= 0.95, f"plane wave coherence 200-800 Hz {lo:.4f}"


CHECKS = {
    "sh orthogonality": _sh_orthogonality,
    "stft round trip": _stft_roundtrip,
    "geometry quantization": _quantize_roundtrip,
    "tetrahedral LS encoder": _tetra_encoder,
}


def run_checks():
    out = []
    for name, fn in CHECKS.items():
        ok, detail = fn()
        out.append((name, bool(ok), detail))
    return out
