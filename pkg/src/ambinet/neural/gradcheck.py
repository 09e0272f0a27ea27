"""Reverse-mode gradients versus central finite differences at float64."""
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..errors import ConfigurationError
from .layers import ChannelNorm, Dropout, SubbandConv2d, conv3x3, swish, up3x3
from .model import apply_mixing, complex_l1_loss

DEFAULT_TOLERANCE = 1e-3
FD_STEP = 1e-6
MAX_ENTRIES = 400


@dataclass
class GradReport:
    op: str
    max_rel_error: float
    tolerance: float
    worst_tensor: str
    worst_index: tuple
    entries: int

    @property
    def passed(self):
        return bool(self.max_rel_error < self.tolerance)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.op:16s} max rel err {self.max_rel_error:.3e} (tol {self.tolerance:.0e}) "
                f"worst {self.worst_tensor}{list(self.worst_index)} over {self.entries} entries")


def _leaf(gen, *shape):
    return torch.randn(*shape, generator=gen, dtype=torch.float64).requires_grad_(True)


def _module_case(module, gen, shape):
    module = module.double()
    x = _leaf(gen, *shape)
    tensors = {"input": x, **dict(module.named_parameters())}
    return (lambda: module(x)), tensors


def _dense_conv(gen, shape=(2, 6, 6)):
    torch.manual_seed(int(torch.randint(1 << 30, (1,), generator=gen)))
    return _module_case(conv3x3(shape[0], 3), gen, (1, *shape))


def _strided_conv(gen, shape=(2, 8, 6)):
    torch.manual_seed(int(torch.randint(1 << 30, (1,), generator=gen)))
    return _module_case(conv3x3(shape[0], 3, stride=2), gen, (1, *shape))


def _transposed_conv(gen, shape=(2, 4, 3)):
    torch.manual_seed(int(torch.randint(1 << 30, (1,), generator=gen)))
    return _module_case(up3x3(shape[0], 3), gen, (1, *shape))


def _subband_conv(gen, shape=(2, 8, 6)):
    torch.manual_seed(int(torch.randint(1 << 30, (1,), generator=gen)))
    return _module_case(SubbandConv2d(shape[0], 3, shape[1]), gen, (1, *shape))


def _channel_norm(gen, shape=(4, 8, 8)):
    norm = ChannelNorm(shape[0])
    with torch.no_grad():
        norm.weight.copy_(torch.rand(shape[0], generator=gen) + 0.5)
        norm.bias.copy_(torch.randn(shape[0], generator=gen))
    return _module_case(norm, gen, (1, *shape))


def _swish(gen, shape=(3, 5, 4)):
    x = _leaf(gen, *shape)
    return (lambda: swish(x)), {"input": x}


def _dropout_eval(gen, shape=(3, 5, 4)):
    drop = Dropout(0.5).eval()
    x = _leaf(gen, *shape)
    return (lambda: drop(x)), {"input": x}


def _dropout_train(gen, shape=(3, 5, 4)):
    drop = Dropout(0.5).train()
    x = _leaf(gen, *shape)
    seed = int(torch.randint(1 << 30, (1,), generator=gen))

    def fn():
        drop.generator = torch.Generator().manual_seed(seed)
        return drop(x)
    return fn, {"input": x}


def _embedding(gen, shape=(5, 8)):
    q, f = shape
    emb = nn.Embedding(25, f).double()
    with torch.no_grad():
        emb.weight.copy_(torch.randn(25, f, generator=gen, dtype=torch.float64))
    idx = torch.randint(0, 25, (1, 3 * q), generator=gen)
    return (lambda: emb(idx)[..., None].expand(1, 3 * q, f, 4)), {"weight": emb.weight}


def _apply_mixing(gen, shape=(4, 3, 5, 4)):
    c, q, f, t = shape
    er, ei = _leaf(gen, c, q, f, t), _leaf(gen, c, q, f, t)
    xr, xi = _leaf(gen, q, f, t), _leaf(gen, q, f, t)

    def fn():
        b = apply_mixing(torch.complex(er, ei), torch.complex(xr, xi))
        return torch.cat([b.real, b.imag])
    return fn, {"E.real": er, "E.imag": ei, "x.real": xr, "x.imag": xi}


def _l1_loss(gen, shape=(4, 5, 6)):
    ar, ai = _leaf(gen, *shape), _leaf(gen, *shape)
    br = torch.randn(*shape, generator=gen, dtype=torch.float64)
    bi = torch.randn(*shape, generator=gen, dtype=torch.float64)
    return (lambda: complex_l1_loss(torch.complex(ar, ai), torch.complex(br, bi))), {"b_hat.real": ar, "b_hat.imag": ai}


OPS = {
    "dense_conv": _dense_conv,
    "subband_conv": _subband_conv,
    "strided_conv": _strided_conv,
    "transposed_conv": _transposed_conv,
    "channel_norm": _channel_norm,
    "swish": _swish,
    "dropout_eval": _dropout_eval,
    "dropout_train": _dropout_train,
    "embedding": _embedding,
    "apply_mixing": _apply_mixing,
    "complex_l1_loss": _l1_loss,
}


def grad_check(op, shape=None, tolerance=DEFAULT_TOLERANCE, seed=0, step=FD_STEP, max_entries=MAX_ENTRIES):
    """Compare autograd gradients of a random projection of ``op``'s output to central differences.

    Relative error per entry is ``|g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-3 * max|g_fd|)``,
    so entries with a vanishing gradient are judged against the tensor's gradient scale.
    """
    if op not in OPS:
        raise ConfigurationError(f"no gradient case registered for {op!r}; have {sorted(OPS)}")
    gen = torch.Generator().manual_seed(seed)
    fn, tensors = OPS[op](gen) if shape is None else OPS[op](gen, shape)
    with torch.no_grad():
        proj = torch.randn(fn().shape, generator=gen, dtype=torch.float64)

    def objective():
        return (fn() * proj).sum()

    names = list(tensors)
    grads = torch.autograd.grad(objective(), [tensors[n] for n in names], allow_unused=True)
    worst = (0.0, names[0], ())
    rng = np.random.default_rng(seed)
    count = 0
    for name, g in zip(names, grads):
        t = tensors[name]
        g = torch.zeros_like(t) if g is None else g
        flat = t.detach().view(-1)
        picks = np.arange(flat.numel())
        if picks.size > max_entries:
            picks = np.sort(rng.choice(picks.size, max_entries, replace=False))
        fd = np.empty(picks.size)
        with torch.no_grad():
            for j, i in enumerate(picks):
                orig = float(flat[i])
                flat[i] = orig + step
                up = float(objective())
                flat[i] = orig - step
                down = float(objective())
                flat[i] = orig
                fd[j] = (up - down) / (2 * step)
        ad = g.detach().reshape(-1).numpy()[picks]
        scale = max(np.max(np.abs(fd)), 1e-12)
        rel = np.abs(ad - fd) / np.maximum(np.maximum(np.abs(ad), np.abs(fd)), 1e-3 * scale)
        k = int(np.argmax(rel))
        if rel[k] >= worst[0]:
            worst = (float(rel[k]), name, np.unravel_index(picks[k], t.shape))
        count += picks.size
    return GradReport(op, worst[0], tolerance, worst[1], tuple(int(i) for i in worst[2]), count)


def swish_analytic_error(seed=0, n=1000):
    """Max relative gap between autograd and the closed-form swish derivative."""
    gen = torch.Generator().manual_seed(seed)
    x = (4 * torch.randn(n, generator=gen, dtype=torch.float64)).requires_grad_(True)
    (g,) = torch.autograd.grad(swish(x).sum(), [x])
    s = torch.sigmoid(x.detach())
    exact = s * (1 + x.detach() * (1 - s))
    return float(((g - exact).abs() / exact.abs().clamp_min(1e-12)).max())


def run_suite(tolerance=DEFAULT_TOLERANCE, seed=0):
    return [grad_check(op, tolerance=tolerance, seed=seed) for op in OPS]
