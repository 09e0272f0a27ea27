"""Training loop, parameter/optimizer store and checkpoints."""
import csv
import json
import logging
import time
from dataclasses import asdict, dataclass

import numpy as np
import torch

from ..dataset import EpochEnd
from ..errors import FormatError, NumericalError
from .model import GenUNet, NetworkConfig, apply_mixing, complex_l1_loss, split_complex, to_complex

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    batch: int = 32
    steps: int = 1000
    seed: int = 0
    loss: str = "reim"
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    log_every: int = 25

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


class ParameterStore:
    """Network weights plus Adam moments and step count."""

    def __init__(self, cfg, seed=0, train_cfg=TrainConfig()):
        self.cfg = cfg
        torch.manual_seed(seed)
        self.model = GenUNet(cfg)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=train_cfg.lr, betas=tuple(train_cfg.betas),
                                          eps=train_cfg.eps, foreach=False)
        self.step = 0

    def named_tensors(self):
        return dict(self.model.named_parameters())

    def moments(self):
        """Adam (first, second) moment tensors per parameter name."""
        out = {}
        for name, p in self.model.named_parameters():
            st = self.optimizer.state.get(p, {})
            out[name] = (st.get("exp_avg", torch.zeros_like(p)), st.get("exp_avg_sq", torch.zeros_like(p)))
        return out

    def save(self, path):
        arrays = {"config": np.array(json.dumps(self.cfg.to_dict(), sort_keys=True)), "step": np.array(self.step)}
        for name, p in self.model.named_parameters():
            m, v = self.moments()[name]
            arrays[f"param/{name}"] = p.detach().cpu().numpy()
            arrays[f"adam_m/{name}"] = m.detach().cpu().numpy()
            arrays[f"adam_v/{name}"] = v.detach().cpu().numpy()
        with open(path, "wb") as f:
            np.savez(f, **arrays)

    @classmethod
    def load(cls, path, train_cfg=TrainConfig()):
        with np.load(path) as z:
            cfg = NetworkConfig.from_dict(json.loads(str(z["config"])))
            store = cls(cfg, 0, train_cfg)
            store.step = int(z["step"])
            params = dict(store.model.named_parameters())
            with torch.no_grad():
                for name, p in params.items():
                    p.copy_(torch.from_numpy(z[f"param/{name}"]))
            if store.step:
                for name, p in params.items():
                    store.optimizer.state[p] = {
                        "step": torch.tensor(float(store.step)),
                        "exp_avg": torch.from_numpy(z[f"adam_m/{name}"].copy()),
                        "exp_avg_sq": torch.from_numpy(z[f"adam_v/{name}"].copy()),
                    }
        return store


def batch_tensors(batch, dtype=torch.float32):
    cdtype = torch.complex64 if dtype == torch.float32 else torch.complex128
    x = torch.from_numpy(batch.x).to(cdtype)
    b = torch.from_numpy(batch.b).to(cdtype)
    return x, torch.from_numpy(np.asarray(batch.qg)).long(), b


def predict(model, x, qg):
    """Encoded Ambisonic spectra for complex array spectra ``x`` [B, Q, F, T]."""
    e = to_complex(model(split_complex(x).to(next(model.parameters()).dtype), qg))
    return apply_mixing(e, x), e


def batch_loss(model, batch, loss_mode="reim"):
    x, qg, b = batch_tensors(batch)
    b_hat, _ = predict(model, x, qg)
    return complex_l1_loss(b_hat, b, loss_mode)


def evaluate_loss(store, batches, loss_mode="reim"):
    """Eval-mode loss averaged over ``batches`` weighted by batch size."""
    store.model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for batch in batches:
            total += float(batch_loss(store.model, batch, loss_mode)) * len(batch)
            count += len(batch)
    return total / count


def train_loop(loader, cfg, hyper=TrainConfig(), store=None, callback=None):
    """Fit the network with Adam on batches served by ``loader``.

    Returns
    -------
    store : ParameterStore
    trace : list of (step, loss)
    """
    if hyper.batch != loader.batch:
        raise FormatError(f"loader batch {loader.batch} differs from training batch {hyper.batch}")
    store = store or ParameterStore(cfg, hyper.seed, hyper)
    for group in store.optimizer.param_groups:
        group["lr"] = hyper.lr
    gen = torch.Generator().manual_seed(hyper.seed + 1)
    store.model.set_generator(gen)
    trace = []
    epoch, step_in_epoch = divmod(store.step, len(loader))
    t0 = time.time()
    for _ in range(hyper.steps):
        try:
            batch = loader.batch_at(epoch, step_in_epoch)
        except EpochEnd:
            epoch, step_in_epoch = epoch + 1, 0
            batch = loader.batch_at(epoch, step_in_epoch)
        step_in_epoch += 1
        store.model.train()
        loss = batch_loss(store.model, batch, hyper.loss)
        value = float(loss.detach())
        if not np.isfinite(value):
            raise NumericalError(f"non-finite loss at step {store.step + 1}")
        store.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        store.optimizer.step()
        store.step += 1
        trace.append((store.step, value))
        if hyper.log_every and store.step % hyper.log_every == 0:
            log.info("step %d epoch %d loss %.6f (%.1f s)", store.step, epoch, value, time.time() - t0)
        if callback:
            callback(store, store.step, value)
    return store, trace


def write_trace(trace, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "loss"])
        for step, loss in trace:
            w.writerow([step, repr(float(loss))])


def read_trace(path):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    return [(int(r["step"]), float(r["loss"])) for r in rows]
