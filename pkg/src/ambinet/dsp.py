"""STFT analysis/synthesis, resampling and WAV I/O."""
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window, resample_poly

from .errors import ConfigurationError, FormatError, InputError

SAMPLE_RATE = 24_000
FFT_SIZE = 1024
HOP_SIZE = 512
EXCERPT_SECONDS = 2.0


@dataclass
class SpectrogramTensor:
    """Complex STFT data laid out as [channels, bins, frames]."""

    data: np.ndarray
    sample_rate: int = SAMPLE_RATE
    fft: int = FFT_SIZE
    hop: int = HOP_SIZE
    n_samples: int | None = None

    def __post_init__(self):
        if self.data.ndim != 3:
            raise FormatError(f"spectrogram must be [C, F, T], got shape {self.data.shape}")
        if self.data.shape[1] != self.fft // 2 + 1:
            raise FormatError(f"{self.data.shape[1]} bins does not match fft={self.fft}")

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def bins(self):
        return self.data.shape[1]

    @property
    def frames(self):
        return self.data.shape[2]

    def bin_frequencies(self):
        return np.arange(self.bins) * self.sample_rate / self.fft

    def like(self, data):
        return SpectrogramTensor(data, self.sample_rate, self.fft, self.hop, self.n_samples)


def bin_frequencies(fft=FFT_SIZE, sample_rate=SAMPLE_RATE):
    return np.arange(fft // 2 + 1) * sample_rate / fft


def n_frames(n_samples, hop=HOP_SIZE):
    return -(-n_samples // hop)


def _check_framing(fft, hop):
    if hop <= 0 or fft <= 0 or fft % hop or fft // hop < 2:
        raise ConfigurationError(f"hop={hop} must divide fft={fft} with at least 50% overlap")


def _pad(x, left, right):
    """Reflect-pad the last axis, falling back to zeros where the signal is too short."""
    n = x.shape[-1]
    rl, rr = min(left, n - 1), min(right, n - 1)
    x = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(rl, rr)], mode="reflect") if n > 1 else x
    return np.pad(x, [(0, 0)] * (x.ndim - 1) + [(left - rl, right - rr)])


def stft(signal, fft=FFT_SIZE, hop=HOP_SIZE, sample_rate=SAMPLE_RATE):
    """Centre-padded Hann STFT of a [channels, samples] signal.

    Produces ceil(samples / hop) frames, so two seconds at 24 kHz give 94
    frames of 513 bins.
    """
    _check_framing(fft, hop)
    x = np.atleast_2d(np.asarray(signal, dtype=float))
    n = x.shape[-1]
    if n == 0:
        raise InputError("empty signal")
    t = n_frames(n, hop)
    total = (t - 1) * hop + fft
    padded = _pad(x, fft // 2, total - n - fft // 2)
    win = get_window("hann", fft)
    idx = np.arange(fft)[None, :] + hop * np.arange(t)[:, None]
    frames = padded[:, idx] * win  # [C, T, fft]
    spec = np.fft.rfft(frames, axis=-1)
    return SpectrogramTensor(np.ascontiguousarray(spec.transpose(0, 2, 1)), sample_rate, fft, hop, n)


def istft(spec, n_samples=None):
    """Weighted overlap-add inverse of :func:`stft`; returns [channels, samples]."""
    n = n_samples or spec.n_samples or spec.frames * spec.hop
    fft, hop, t = spec.fft, spec.hop, spec.frames
    win = get_window("hann", fft)
    frames = np.fft.irfft(spec.data.transpose(0, 2, 1), n=fft, axis=-1) * win
    total = (t - 1) * hop + fft
    out = np.zeros((spec.channels, total))
    norm = np.zeros(total)
    for i in range(t):
        out[:, i * hop:i * hop + fft] += frames[:, i]
        norm[i * hop:i * hop + fft] += win ** 2
    start = fft // 2
    norm = norm[start:start + n]
    out = out[:, start:start + n]
    return out / np.where(norm > 1e-10, norm, 1.0)


def resample(signal, src, dst):
    """Polyphase resampling along the last axis."""
    if src <= 0 or dst <= 0:
        raise ConfigurationError("sample rates must be positive")
    x = np.asarray(signal, dtype=float)
    if src == dst:
        return x.copy()
    ratio = Fraction(int(dst), int(src))
    return resample_poly(x, ratio.numerator, ratio.denominator, axis=-1)


def read_wav(path):
    """Read a WAV file as float64 [channels, samples] plus its sample rate."""
    fs, data = wavfile.read(path)
    if np.issubdtype(data.dtype, np.integer):
        data = data.astype(np.float64) / np.iinfo(data.dtype).max
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    else:
        data = data.T
    return np.ascontiguousarray(data), fs


def write_wav(path, signal, sample_rate=SAMPLE_RATE, pcm16=False):
    x = np.atleast_2d(np.asarray(signal)).T
    if pcm16:
        x = np.round(np.clip(x, -1.0, 1.0) * 32767).astype(np.int16)
    else:
        x = x.astype(np.float32)
    wavfile.write(path, int(sample_rate), x)
