"""Geometry-conditioned U-Net predicting a complex time-frequency mixing matrix."""
from dataclasses import asdict, dataclass

import torch
from torch import nn
from torch.nn import functional as F

from ..array import GRID_STEPS
from ..errors import ConfigurationError, FormatError, InputError, NumericalError
from .layers import ChannelNorm, Dropout, SubbandConv2d, conv3x3, swish, up3x3


@dataclass(frozen=True)
class NetworkConfig:
    q: int = 5
    order: int = 1
    fs: int = 24_000
    fft: int = 1024
    hop: int = 512
    enc_channels: tuple = (32, 64, 128, 256)
    bottleneck_channels: int = 512
    dec_channels: tuple = (256, 128, 64, 32)
    geom_channels: int = 15
    kernel: int = 3
    dropout_enc: float = 0.25
    dropout_dec: float = 0.5
    input_shape: tuple = (94, 513)  # (T, F)
    padded_shape: tuple = (96, 560)  # (T, F)
    subband_size: int = 1

    def __post_init__(self):
        object.__setattr__(self, "enc_channels", tuple(self.enc_channels))
        object.__setattr__(self, "dec_channels", tuple(self.dec_channels))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "padded_shape", tuple(self.padded_shape))
        if len(self.enc_channels) != len(self.dec_channels):
            raise ConfigurationError("encoder and decoder need the same depth")
        div = 2 ** len(self.enc_channels)
        if any(d % div for d in self.padded_shape):
            raise ConfigurationError(f"padded shape {self.padded_shape} not divisible by {div}")
        if any(p < i for p, i in zip(self.padded_shape, self.input_shape)):
            raise ConfigurationError("padded shape smaller than input")
        if self.kernel != 3:
            raise ConfigurationError("only 3x3 kernels are supported")

    @property
    def n_sh(self):
        return (self.order + 1) ** 2

    @property
    def out_channels(self):
        return 2 * self.n_sh * self.q

    @classmethod
    def desk(cls, **kw):
        """Reduced widths for CPU-scale runs."""
        base = dict(enc_channels=(8, 16, 32, 64), bottleneck_channels=128, dec_channels=(64, 32, 16, 8))
        base.update(kw)
        return cls(**base)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class GeometryEncoder(nn.Module):
    """Embeds quantized mic coordinates and produces one modulation map per encoder level."""

    def __init__(self, cfg, level_channels):
        super().__init__()
        t_pad, f_pad = cfg.padded_shape
        self.t_pad = t_pad
        self.embed = nn.Embedding(GRID_STEPS + 1, f_pad)
        g = cfg.geom_channels
        self.convs = nn.ModuleList(
            [conv3x3(3 * cfg.q if i == 0 else g, g, stride=1 if i == 0 else 2) for i in range(len(level_channels))])
        self.proj = nn.ModuleList([nn.Conv2d(g, c, 1) for c in level_channels])

    def features(self, qg):
        """[B, Q, 3] indices -> [B, 3Q, F, T] time-replicated embedding."""
        if qg.min() < 0 or qg.max() > GRID_STEPS:
            raise InputError(f"quantized coordinates must be in 0..{GRID_STEPS}")
        e = self.embed(qg.reshape(qg.shape[0], -1))  # [B, 3Q, F]
        return e[..., None].expand(*e.shape, self.t_pad)

    def forward(self, qg):
        h = self.features(qg)
        mods = []
        for conv, proj in zip(self.convs, self.proj):
            h = swish(conv(h))
            mods.append(proj(h))
        return mods


class EncoderBlock(nn.Module):
    def __init__(self, cin, cout, dropout, n_freq=None, subband_size=None):
        super().__init__()
        self.conv1 = SubbandConv2d(cin, cout, n_freq, subband_size) if n_freq else conv3x3(cin, cout)
        self.norm = ChannelNorm(cout)
        self.drop = Dropout(dropout)
        self.down = conv3x3(cout, cout, stride=2)

    def forward(self, x, mod):
        h = swish(self.conv1(x * mod))
        skip = self.drop(self.norm(h))
        return swish(self.down(skip)), skip


class DecoderBlock(nn.Module):
    def __init__(self, cin, skip_channels, cout, dropout):
        super().__init__()
        self.up = up3x3(cin, cout)
        self.drop = Dropout(dropout)
        self.conv1 = conv3x3(cout + skip_channels, cout)
        self.conv2 = conv3x3(cout, cout)

    def forward(self, x, skip):
        h = self.drop(torch.cat([self.up(x), skip], dim=1))
        return swish(self.conv2(swish(self.conv1(h))))


class GenUNet(nn.Module):
    """Maps array STFTs and quantized geometry to a mixing matrix field.

    Input spectra are [B, 2Q, F, T] real (real parts then imaginary parts of
    the Q mics), output is [B, 2, (N+1)**2, Q, F, T] real holding the real and
    imaginary parts of E.
    """

    def __init__(self, cfg=NetworkConfig()):
        super().__init__()
        self.cfg = cfg
        enc = cfg.enc_channels
        level_in = (2 * cfg.q,) + enc[:-1]
        f_pad = cfg.padded_shape[1]
        self.geometry = GeometryEncoder(cfg, level_in)
        self.encoders = nn.ModuleList([
            EncoderBlock(cin, cout, cfg.dropout_enc, f_pad if i == 0 else None, cfg.subband_size)
            for i, (cin, cout) in enumerate(zip(level_in, enc))])
        self.bottleneck = nn.ModuleList([conv3x3(enc[-1], cfg.bottleneck_channels),
                                         conv3x3(cfg.bottleneck_channels, cfg.bottleneck_channels)])
        dec_in = (cfg.bottleneck_channels,) + cfg.dec_channels[:-1]
        self.decoders = nn.ModuleList([
            DecoderBlock(cin, skip, cout, cfg.dropout_dec)
            for cin, skip, cout in zip(dec_in, enc[::-1], cfg.dec_channels)])
        self.head = nn.Conv2d(cfg.dec_channels[-1], cfg.out_channels, 1)

    def set_generator(self, generator):
        for m in self.modules():
            if isinstance(m, Dropout):
                m.generator = generator

    def pad(self, x):
        (t_in, f_in), (t_pad, f_pad) = self.cfg.input_shape, self.cfg.padded_shape
        if x.shape[-2:] != (f_in, t_in):
            raise FormatError(f"expected {f_in} bins x {t_in} frames, got {tuple(x.shape[-2:])}")
        return F.pad(x, (0, t_pad - t_in, 0, f_pad - f_in))

    def forward(self, x, qg, check_finite=False):
        cfg = self.cfg
        if x.shape[1] != 2 * cfg.q or qg.shape[1:] != (cfg.q, 3):
            raise FormatError(f"expected {2 * cfg.q} input channels and [{cfg.q}, 3] geometry")
        h = self.pad(x)
        mods = self.geometry(qg)
        skips = []
        for i, (block, mod) in enumerate(zip(self.encoders, mods)):
            h, skip = block(h, mod)
            skips.append(skip)
            if check_finite:
                _finite(h, f"encoder {i}")
        for conv in self.bottleneck:
            h = swish(conv(h))
        if check_finite:
            _finite(h, "bottleneck")
        for i, (block, skip) in enumerate(zip(self.decoders, skips[::-1])):
            h = block(h, skip)
            if check_finite:
                _finite(h, f"decoder {i}")
        out = self.head(h)
        t_in, f_in = cfg.input_shape
        out = out[:, :, :f_in, :t_in]
        if check_finite:
            _finite(out, "output head")
        return out.reshape(out.shape[0], 2, cfg.n_sh, cfg.q, f_in, t_in)


def _finite(t, where):
    if not torch.isfinite(t).all():
        raise NumericalError(f"non-finite activations after {where}")


def split_complex(x):
    """[B, Q, F, T] complex -> [B, 2Q, F, T] real."""
    return torch.cat([x.real, x.imag], dim=1)


def to_complex(e):
    """[B, 2, C, Q, F, T] real -> [B, C, Q, F, T] complex."""
    return torch.complex(e[:, 0], e[:, 1])


def geometry_features(model, qg):
    """Time-replicated geometry embedding [B, 3Q, F_pad, T_pad]."""
    return model.geometry.features(torch.as_tensor(qg))


def unet_forward(model, x, qg, mode="eval", rng=None):
    """Mixing-matrix field E for complex spectra ``x`` [B, Q, F, T] and indices ``qg`` [B, Q, 3].

    ``rng`` is a ``torch.Generator`` (or an int seed) driving dropout in
    train mode. Returns a complex tensor [B, (N+1)**2, Q, F, T].
    """
    if mode not in ("train", "eval"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    model.train(mode == "train")
    if isinstance(rng, int):
        rng = torch.Generator().manual_seed(rng)
    model.set_generator(rng)
    x = torch.as_tensor(x)
    if x.dim() == 3:
        x, qg = x[None], torch.as_tensor(qg)[None]
    real_dtype = next(model.parameters()).dtype
    inp = split_complex(x).to(real_dtype)
    return to_complex(model(inp, torch.as_tensor(qg), check_finite=True))


def apply_mixing(e, x):
    """b(t, f) = E(t, f) x(t, f) for E [..., C, Q, F, T] and x [..., Q, F, T]."""
    e, x = torch.as_tensor(e), torch.as_tensor(x)
    if e.shape[:-4] != x.shape[:-3] or e.shape[-3:] != x.shape[-3:]:
        raise FormatError(f"mixing matrix {tuple(e.shape)} does not fit signal {tuple(x.shape)}")
    return torch.einsum("...cqft,...qft->...cft", e, x.to(e.dtype))


def complex_l1_loss(b_hat, b, mode="reim"):
    """Mean of |Re d| + |Im d| over all elements (``mode="modulus"``: mean |d|)."""
    d = torch.as_tensor(b_hat) - torch.as_tensor(b)
    if mode == "reim":
        return (d.real.abs() + d.imag.abs()).mean()
    if mode == "modulus":
        return d.abs().mean()
    raise ConfigurationError(f"unknown loss mode {mode!r}")
