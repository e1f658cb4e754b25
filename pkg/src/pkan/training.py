"""NLL / MSE training with Adam and global-norm gradient clipping.

Losses are computed in standardized space and normalized per window-step,
so reported values are comparable across batch sizes; the normalization
only rescales gradients by a constant absorbed into the learning rate.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .likelihood import GAUSSIAN, gaussian_log_pdf, student_t_log_pdf
from .nets import DivergenceError, ModelState, forward


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int | None = None  # None = full batch
    gradient_clip_norm: float | None = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class TrainLog:
    losses: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    final_checksum: str = ""

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "seconds"])
            for i, (loss, sec) in enumerate(zip(self.losses, self.seconds), start=1):
                writer.writerow([i, repr(loss), f"{sec:.3f}"])


def nll_loss(state: ModelState, contexts, targets):
    """Mean negative log-likelihood per window-step, standardized space."""
    if len(contexts) == 0:
        raise ValueError("nll_loss: no windows")
    out = forward(state, contexts)
    if state.config.likelihood == GAUSSIAN:
        lp = gaussian_log_pdf(out["mu"], out["sigma"], targets)
    else:
        lp = student_t_log_pdf(out["mu"], out["sigma"], out["nu"], targets)
    return ad.mul(ad.mean(lp), -1.0)


def mse_loss(state: ModelState, contexts, targets):
    if len(contexts) == 0:
        raise ValueError("mse_loss: no windows")
    out = forward(state, contexts)
    return ad.mean(ad.square(ad.sub(out["point"], targets)))


def loss_for(state: ModelState):
    return nll_loss if state.config.is_probabilistic else mse_loss


class Adam:
    """Standard bias-corrected Adam over a fixed parameter list."""

    def __init__(self, params, config: TrainConfig):
        self.params = params
        self.config = config
        self.step_count = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def step(self):
        cfg = self.config
        grads = [
            p.grad if p.grad is not None else np.zeros_like(p.value)
            for p in self.params
        ]
        if cfg.gradient_clip_norm is not None:
            total = np.sqrt(sum(float((g * g).sum()) for g in grads))
            if total > cfg.gradient_clip_norm:
                scale = cfg.gradient_clip_norm / total
                grads = [g * scale for g in grads]
        self.step_count += 1
        b1c = 1.0 - cfg.beta1 ** self.step_count
        b2c = 1.0 - cfg.beta2 ** self.step_count
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p.value = p.value - cfg.learning_rate * (m / b1c) / (
                np.sqrt(v / b2c) + cfg.epsilon
            )


def train(state: ModelState, contexts, targets, config: TrainConfig):
    """Fit in place on standardized windows; returns (state, TrainLog).

    Window order is fixed (no shuffling), so runs are deterministic given
    the model seed. Raises DivergenceError with the epoch on non-finite loss.
    """
    n = len(contexts)
    if n == 0:
        raise ValueError("train: no windows")
    loss_fn = loss_for(state)
    params = state.parameters()
    optimizer = Adam(params, config)
    batch = config.batch_size or n
    # materialize batches once so constant-input caches stay valid across epochs
    batches = [
        (
            np.ascontiguousarray(contexts[lo : min(lo + batch, n)]),
            np.ascontiguousarray(targets[lo : min(lo + batch, n)]),
        )
        for lo in range(0, n, batch)
    ]
    log = TrainLog()
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        epoch_loss = 0.0
        steps = 0
        for ctx_batch, tgt_batch in batches:
            ad.zero_gradients(params)
            try:
                loss = loss_fn(state, ctx_batch, tgt_batch)
            except DivergenceError as exc:
                raise DivergenceError(
                    exc.layer_index, f"epoch {epoch}: {exc}"
                ) from exc
            value = float(loss.value)
            if not np.isfinite(value):
                raise DivergenceError(-1, f"epoch {epoch}: non-finite loss {value}")
            ad.backward(loss)
            optimizer.step()
            epoch_loss += value * len(ctx_batch)
            steps += len(ctx_batch)
        log.losses.append(epoch_loss / steps)
        log.seconds.append(time.perf_counter() - t0)
    log.final_checksum = state.checksum()
    return state, log


def standardize_windows(contexts, targets, standardizer):
    mean, std = standardizer
    return (contexts - mean) / std, (targets - mean) / std
