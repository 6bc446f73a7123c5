"""Minibatch stochastic training of the ELBO.

Each epoch shuffles the instances with a seeded permutation, walks the
minibatches drawing fresh reparameterization noise per batch, and applies
one optimizer update per batch on the mean loss. The learning rate for
epoch i is eta0 * lr_decay**i (computed as a power so the schedule is
exact). Training stops at the epoch cap or when the 3-epoch moving
average of the epoch-mean loss stabilizes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

CONVERGENCE_WINDOW = 3


class TrainingDiverged(RuntimeError):
    """Loss became NaN/Inf; carries the offending epoch and batch index."""

    def __init__(self, epoch, batch_index, value):
        super().__init__(
            f"training diverged at epoch {epoch}, batch {batch_index}: loss={value}"
        )
        self.epoch = epoch
        self.batch_index = batch_index


@dataclass
class TrainConfig:
    eta0: float = 0.0005
    lr_decay: float = 0.95
    max_iter: int = 100
    batch_size: int = 2048
    seed: int = 0
    optimizer: str = "adam"
    convergence_tol: float = 1e-4

    def __post_init__(self):
        if self.eta0 <= 0:
            raise ValueError("eta0 must be positive")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self):
        return {
            "eta0": self.eta0,
            "lr_decay": self.lr_decay,
            "max_iter": self.max_iter,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "optimizer": self.optimizer,
            "convergence_tol": self.convergence_tol,
        }


@dataclass
class TrainReport:
    """Per-epoch curves; all lists share the number of epochs actually run."""

    loss: list = field(default_factory=list)
    kl: list = field(default_factory=list)
    recon: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    converged: bool = False

    @property
    def epochs_run(self):
        return len(self.loss)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("epoch,loss,kl,recon,lr,seconds\n")
            for i in range(self.epochs_run):
                fh.write(
                    f"{i},{self.loss[i]:.10g},{self.kl[i]:.10g},"
                    f"{self.recon[i]:.10g},{self.lr[i]!r},{self.seconds[i]:.4f}\n"
                )


class SgdOptimizer:
    def __init__(self, params):
        self.params = params

    def step(self, lr):
        for t in self.params.values():
            if t.grad is not None:
                t.data -= lr * t.grad


class AdamOptimizer:
    """Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(name, params):
    return AdamOptimizer(params) if name == "adam" else SgdOptimizer(params)


def step(model, batch, optimizer, lr, eps):
    """One optimizer update on a packed batch; returns the loss pieces."""
    loss, recon, kl = model.loss_parts(batch, eps)
    value = float(loss.data)
    if not np.isfinite(value):
        return value, float("nan"), float("nan")
    ad.backward(loss)
    optimizer.step(lr)
    return value, float(recon.data), float(kl.data)


def fit(model, instances, cfg, on_epoch_end=None):
    """Run the training loop on an already-built model. Mutates its params.

    ``on_epoch_end(epoch, model, report)`` is invoked after each epoch,
    e.g. for periodic checkpointing.
    """
    if not instances:
        raise ValueError("cannot train on an empty instance list")
    report = TrainReport()
    optimizer = make_optimizer(cfg.optimizer, model.params)
    # Independent child streams: one for shuffling, one for noise draws.
    shuffle_ss, noise_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_seeds = shuffle_ss.generate_state(max(cfg.max_iter, 1), dtype=np.uint64)
    noise_rng = np.random.Generator(np.random.PCG64(noise_ss))
    n_samples = model.config.n_samples
    packed = model.pack_all(instances)
    n = len(instances)

    for epoch in range(cfg.max_iter):
        lr = cfg.eta0 * cfg.lr_decay**epoch
        started = time.perf_counter()
        loss_sum = recon_sum = kl_sum = 0.0
        n_seen = 0
        # Same seeded permutation contract as corpus.minibatch_iter, but
        # sliced out of the pre-packed arrays instead of instance lists.
        perm = np.random.Generator(
            np.random.PCG64(int(shuffle_seeds[epoch]))
        ).permutation(n)
        for b_idx, start in enumerate(range(0, n, cfg.batch_size)):
            batch = model.take(packed, perm[start : start + cfg.batch_size])
            eps = noise_rng.standard_normal((n_samples, batch.size, model.config.latent_dim))
            loss, recon, kl = step(model, batch, optimizer, lr, eps)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, b_idx, loss)
            loss_sum += loss * batch.size
            recon_sum += recon * batch.size
            kl_sum += kl * batch.size
            n_seen += batch.size
        report.loss.append(loss_sum / n_seen)
        report.recon.append(recon_sum / n_seen)
        report.kl.append(kl_sum / n_seen)
        report.lr.append(lr)
        report.seconds.append(time.perf_counter() - started)
        if on_epoch_end is not None:
            on_epoch_end(epoch, model, report)
        if _converged(report.loss, cfg.convergence_tol):
            report.converged = True
            break
    return model, report


def _converged(losses, tol):
    """Relative change of the 3-epoch moving average below tol."""
    w = CONVERGENCE_WINDOW
    if len(losses) < w + 1:
        return False
    current = sum(losses[-w:]) / w
    previous = sum(losses[-w - 1 : -1]) / w
    if current == 0.0:
        return abs(previous) < tol
    return abs(current - previous) / abs(current) < tol


def init_rng(seed):
    """The dedicated parameter-initialization stream for a training seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0x1217))))


def train(instances, model_config, train_config, on_epoch_end=None):
    """Build a fresh bag-of-words model and train it (the full recipe).

    Parameters are initialized from the seed's dedicated init stream, so
    two calls with identical inputs produce bit-identical models.
    """
    from .model import Model

    model = Model(model_config, rng=init_rng(train_config.seed))
    if train_config.max_iter == 0 or not instances:
        if not instances and train_config.max_iter > 0:
            raise ValueError("cannot train on an empty instance list")
        return model, TrainReport()
    return fit(model, instances, train_config, on_epoch_end=on_epoch_end)
