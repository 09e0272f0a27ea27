import numpy as np
import pytest
import torch

from ambinet.dataset import Batch, EpochEnd
from ambinet.errors import FormatError, NumericalError
from ambinet.neural import NetworkConfig, ParameterStore, TrainConfig, train_loop
from ambinet.neural.train import evaluate_loss, read_trace, write_trace

SMALL = NetworkConfig.desk(input_shape=(6, 17), padded_shape=(16, 32))


class ToyLoader:
    """Two batches per epoch of random spectra with a fixed linear target encoding."""

    def __init__(self, batch=2, n_batches=2, seed=0, poison_at=None):
        self.batch = batch
        self.n = n_batches
        self.seed = seed
        self.poison_at = poison_at
        rng = np.random.default_rng(seed)
        self.mix = rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5))

    def __len__(self):
        return self.n

    def batch_at(self, epoch, step):
        if step >= self.n:
            raise EpochEnd()
        rng = np.random.default_rng([self.seed, epoch, step])
        x = rng.standard_normal((self.batch, 5, 17, 6)) + 1j * rng.standard_normal((self.batch, 5, 17, 6))
        b = np.einsum("cq,bqft->bcft", self.mix, x)
        if self.poison_at == (epoch, step):
            b[0, 0, 0, 0] = np.nan
        return Batch(x, rng.integers(0, 25, (self.batch, 5, 3)), b)


def params(store):
    return {n: p.detach().clone() for n, p in store.model.named_parameters()}


def test_zero_learning_rate_keeps_parameters():
    store = ParameterStore(SMALL, 0)
    before = params(store)
    train_loop(ToyLoader(), SMALL, TrainConfig(lr=0.0, batch=2, steps=5), store)
    for n, p in params(store).items():
        assert torch.equal(p, before[n]), n


def test_first_adam_step_is_minus_lr():
    store = ParameterStore(SMALL, 0, TrainConfig(lr=1e-3))
    before = params(store)
    for p in store.model.parameters():
        p.grad = torch.ones_like(p)
    store.optimizer.step()
    for n, p in params(store).items():
        torch.testing.assert_close(p - before[n], torch.full_like(p, -1e-3), rtol=1e-4, atol=1e-7)


def test_training_reduces_loss_and_is_deterministic():
    hyper = TrainConfig(lr=3e-3, batch=2, steps=30, seed=1)
    store_a, trace_a = train_loop(ToyLoader(), SMALL, hyper)
    _, trace_b = train_loop(ToyLoader(), SMALL, hyper)
    assert trace_a == trace_b
    assert len(trace_a) == 30 and trace_a[0][0] == 1 and trace_a[-1][0] == 30
    assert np.mean([l for _, l in trace_a[-4:]]) < 0.8 * np.mean([l for _, l in trace_a[:4]])
    assert store_a.step == 30


def test_non_finite_loss_aborts_with_step():
    with pytest.raises(NumericalError, match="step 4"):
        train_loop(ToyLoader(poison_at=(1, 1)), SMALL, TrainConfig(batch=2, steps=6))


def test_batch_mismatch():
    with pytest.raises(FormatError):
        train_loop(ToyLoader(batch=3), SMALL, TrainConfig(batch=2, steps=1))


def test_checkpoint_round_trip(tmp_path):
    store, _ = train_loop(ToyLoader(), SMALL, TrainConfig(lr=1e-3, batch=2, steps=3))
    store.save(tmp_path / "ck.npz")
    back = ParameterStore.load(tmp_path / "ck.npz")
    assert back.step == 3 and back.cfg == SMALL
    for n, p in params(back).items():
        assert torch.equal(p, params(store)[n])
    mom_a, mom_b = store.moments(), back.moments()
    for n in mom_a:
        assert torch.equal(mom_a[n][0], mom_b[n][0]) and torch.equal(mom_a[n][1], mom_b[n][1])
    batches = [ToyLoader().batch_at(0, 0)]
    assert evaluate_loss(store, batches) == evaluate_loss(back, batches)


def test_trace_csv(tmp_path):
    trace = [(1, 0.5), (2, 0.25 + 1e-17), (3, 1 / 3)]
    write_trace(trace, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "step,loss"
    assert read_trace(tmp_path / "t.csv") == trace
