"""Network building blocks not covered by ``torch.nn``."""
import torch
from torch import nn
from torch.nn import functional as F


def swish(x):
    return x * torch.sigmoid(x)


class Swish(nn.Module):
    def forward(self, x):
        return swish(x)


class ChannelNorm(nn.Module):
    """Per-sample, per-channel standardization over (F, T) with a learnable affine."""

    def __init__(self, channels, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def normalize(self, x):
        mean = x.mean(dim=(-2, -1), keepdim=True)
        var = x.var(dim=(-2, -1), keepdim=True, unbiased=False)
        return (x - mean) / torch.sqrt(var + self.eps)

    def forward(self, x):
        return self.normalize(x) * self.weight[:, None, None] + self.bias[:, None, None]


class Dropout(nn.Module):
    """Inverted dropout drawing its mask from an explicit generator.

    The generator is attached per forward pass by the owning model so that
    training runs replay exactly given a seed.
    """

    def __init__(self, p):
        super().__init__()
        self.p = p
        self.generator = None

    def forward(self, x):
        if not self.training or self.p == 0:
            return x
        keep = 1.0 - self.p
        mask = torch.rand(x.shape, generator=self.generator, dtype=x.dtype, device=x.device) < keep
        return x * mask / keep


class SubbandConv2d(nn.Module):
    """3x3 convolution whose weights differ per frequency sub-band.

    Input and output are [B, C, F, T]. With ``subband_size`` 1 every
    frequency row has its own kernel; the receptive field still spans
    neighbouring bins and frames, zero-padded at the edges.
    """

    def __init__(self, in_channels, out_channels, n_freq, subband_size=1, kernel_size=3):
        super().__init__()
        if n_freq % subband_size:
            raise ValueError(f"{n_freq} bins not divisible by sub-band size {subband_size}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.n_freq = n_freq
        self.subband_size = subband_size
        self.kernel_size = kernel_size
        n_bands = n_freq // subband_size
        fan_in = in_channels * kernel_size ** 2
        bound = 1.0 / fan_in ** 0.5
        shape = (n_bands, out_channels, in_channels, kernel_size ** 2)
        self.weight = nn.Parameter(torch.empty(shape).uniform_(-bound, bound))
        self.bias = nn.Parameter(torch.empty(n_bands, out_channels).uniform_(-bound, bound))

    def forward(self, x):
        b, c, f, t = x.shape
        if c != self.in_channels or f != self.n_freq:
            raise ValueError(f"expected [B, {self.in_channels}, {self.n_freq}, T], got {list(x.shape)}")
        k = self.kernel_size
        cols = F.unfold(x, k, padding=k // 2).reshape(b, c * k * k, f, t)
        cols = cols.permute(2, 0, 3, 1).reshape(f, b * t, c * k * k)
        w = self.weight.repeat_interleave(self.subband_size, dim=0)  # [F, O, C, K]
        w = w.reshape(f, self.out_channels, -1).transpose(1, 2)
        bias = self.bias.repeat_interleave(self.subband_size, dim=0)  # [F, O]
        out = torch.baddbmm(bias[:, None, :], cols, w)  # [F, B*T, O]
        return out.reshape(f, b, t, -1).permute(1, 3, 0, 2)

    @classmethod
    def from_dense(cls, conv, n_freq, subband_size=1):
        """Sub-band layer whose every band copies a dense ``nn.Conv2d``."""
        layer = cls(conv.in_channels, conv.out_channels, n_freq, subband_size, conv.kernel_size[0])
        with torch.no_grad():
            w = conv.weight.reshape(conv.out_channels, conv.in_channels, -1)
            layer.weight.copy_(w[None].expand_as(layer.weight))
            layer.bias.copy_(conv.bias[None].expand_as(layer.bias))
        return layer.to(conv.weight.dtype)


def conv3x3(cin, cout, stride=1):
    return nn.Conv2d(cin, cout, 3, stride=stride, padding=1)


def up3x3(cin, cout):
    """Transposed 3x3 convolution doubling both spatial dims."""
    return nn.ConvTranspose2d(cin, cout, 3, stride=2, padding=1, output_padding=1)
