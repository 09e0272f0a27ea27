"""Signal-independent regularized least-squares Ambisonics encoder."""
import struct
from dataclasses import dataclass

import numpy as np

from .array import SPEED_OF_SOUND, atf_matrix
from .dsp import FFT_SIZE, SAMPLE_RATE, bin_frequencies
from .errors import FormatError, InputError, NumericalError
from .sh import sh_matrix, uniform_grid

DEFAULT_BETA = 0.01
GRID_SIZE = 1008
# Gram matrices worse conditioned than this go through the SVD route
MAX_GRAM_CONDITION = 1e8


@dataclass(frozen=True)
class StaticEncoder:
    matrices: np.ndarray  # [F, (N+1)**2, Q] complex
    freqs: np.ndarray
    order: int
    beta: float
    sample_rate: int = SAMPLE_RATE

    @property
    def q(self):
        return self.matrices.shape[2]

    @property
    def bins(self):
        return self.matrices.shape[0]

    def save(self, path):
        """Header (Q, N, F, fs, beta) followed by interleaved complex128 matrices."""
        with open(path, "wb") as f:
            f.write(b"LSENC1\0\0")
            f.write(struct.pack("<iiiid", self.q, self.order, self.bins, self.sample_rate, self.beta))
            f.write(np.asarray(self.freqs, "<f8").tobytes())
            f.write(np.ascontiguousarray(self.matrices, "<c16").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            if f.read(8) != b"LSENC1\0\0":
                raise FormatError(f"{path} is not an encoder file")
            q, order, n_bins, fs, beta = struct.unpack("<iiiid", f.read(struct.calcsize("<iiiid")))
            freqs = np.frombuffer(f.read(8 * n_bins), "<f8").copy()
            mats = np.frombuffer(f.read(), "<c16").reshape(n_bins, (order + 1) ** 2, q).copy()
        return cls(mats, freqs, order, beta, fs)


def _svd_solve(y, h, beta):
    u, s, vh = np.linalg.svd(h, full_matrices=False)
    if beta > 0:
        gain = s / (s ** 2 + beta ** 2)
    else:
        cutoff = s[..., :1] * max(h.shape[-2:]) * np.finfo(float).eps
        gain = np.divide(1.0, s, out=np.zeros_like(s), where=s > cutoff)
    return (y @ np.swapaxes(vh.conj(), -1, -2)) * gain[..., None, :] @ np.swapaxes(u.conj(), -1, -2)


def _solve_bins(y, h, beta):
    """E(f) = Y H^H (H H^H + beta^2 I)^-1 for a stack of frequencies.

    Well-conditioned bins use a Cholesky factor of the Hermitian Gram
    matrix; the rest fall back to an SVD of H.
    """
    q = h.shape[1]
    hh = np.swapaxes(h.conj(), -1, -2)
    gram = h @ hh + beta ** 2 * np.eye(q)
    rhs = y @ hh  # [F, C, Q]
    ev = np.linalg.eigvalsh(gram)
    good = ev[:, 0] > ev[:, -1] / MAX_GRAM_CONDITION
    out = np.empty(rhs.shape, dtype=complex)
    if np.any(good):
        try:
            chol = np.linalg.cholesky(gram[good])
            # E G = R  <=>  G E^H = R^H
            z = np.linalg.solve(chol, np.swapaxes(rhs[good].conj(), -1, -2))
            e_h = np.linalg.solve(np.swapaxes(chol.conj(), -1, -2), z)
            out[good] = np.swapaxes(e_h.conj(), -1, -2)
        except np.linalg.LinAlgError:
            good[:] = False
    if not np.all(good):
        out[~good] = _svd_solve(y, h[~good], beta)
    return out


def _check_rank(h, freqs):
    """Unregularized designs need full-rank responses; DC is rank one for every array and is exempt."""
    ev = np.linalg.eigvalsh(h @ np.swapaxes(h.conj(), -1, -2))
    suspect = np.nonzero((ev[:, 0] <= ev[:, -1] / MAX_GRAM_CONDITION) & (freqs > 0))[0]
    s = np.linalg.svd(h[suspect], compute_uv=False)
    bad = suspect[s[:, -1] <= s[:, 0] * max(h.shape[1:]) * np.finfo(float).eps]
    if bad.size:
        raise NumericalError(f"singular array response with beta=0 at {bad.size} bins "
                             f"(first {bad[:5].tolist()}); the geometry is degenerate")


def design_ls_encoder(g, order=1, beta=DEFAULT_BETA, grid=None, freqs=None, convention="SN3D",
                      c=SPEED_OF_SOUND, sample_rate=SAMPLE_RATE, fft=FFT_SIZE):
    """Per-bin least-squares fit of the array responses to the SH patterns over a grid.

    Parameters
    ----------
    g : ArrayGeometry
    order : int
        Ambisonic order N.
    beta : float
        Regularization; ``beta**2`` is added to the diagonal of the Q x Q
        array Gram matrix.
    grid : DirectionGrid, optional
        Design directions, 1008-point Fibonacci lattice by default.
    freqs : array_like, optional
        Design frequencies in Hz, STFT bin centres by default.
    """
    if beta < 0:
        raise InputError("beta must be non-negative")
    grid = grid or uniform_grid(GRID_SIZE)
    freqs = bin_frequencies(fft, sample_rate) if freqs is None else np.asarray(freqs, dtype=float)
    y = sh_matrix(grid.azimuth, grid.elevation, order, convention)
    if len(grid) < y.shape[0] or len(grid) < g.q:
        raise InputError("grid has fewer directions than SH channels or mics")
    h = atf_matrix(g, freqs, grid.azimuth, grid.elevation, c)
    if beta == 0:
        _check_rank(h, freqs)
    mats = _solve_bins(y, h, beta)
    bad = np.nonzero(~np.all(np.isfinite(mats), axis=(1, 2)))[0]
    if bad.size:
        raise NumericalError(f"non-finite encoder at bins {bad.tolist()} ({freqs[bad[0]]:.1f} Hz first)")
    return StaticEncoder(mats, freqs, order, float(beta), sample_rate)


def apply_static_encoder(enc, x):
    """Frequency-domain application: b(t, f) = E(f) x(t, f)."""
    if x.channels != enc.q or x.bins != enc.bins:
        raise FormatError(f"encoder expects {enc.q} ch x {enc.bins} bins, got {x.channels} x {x.bins}")
    return x.like(np.einsum("fnq,qft->nft", enc.matrices, x.data))
