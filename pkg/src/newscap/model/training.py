"""Adam training loop with the stepped learning-rate decay schedule."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import decoder
from .params import ModelDims, ModelParams, TrainingConfig, init_params, zero_grads

log = logging.getLogger(__name__)


@dataclass
class TrainSample:
    sample_id: str
    ids: np.ndarray      # token ids including <start>/<end>
    grid: np.ndarray     # (R, D_img)
    a_f: np.ndarray      # (M, D_w)


def lr_at_epoch(epoch: int, config: TrainingConfig) -> float:
    """Learning rate for a 1-based epoch: decayed at first_decay_epoch and
    every decay_every epochs after that."""
    if epoch < config.first_decay_epoch:
        return config.lr
    n_decays = 1 + (epoch - config.first_decay_epoch) // config.decay_every
    return config.lr * config.decay_factor**n_decays


class Adam:
    def __init__(self, dims: ModelDims, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = zero_grads(dims)
        self.v = zero_grads(dims)
        self.t = 0

    def step(self, params: ModelParams, grads: dict[str, np.ndarray], lr: float):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, tensor in params.named_tensors():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            tensor -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class _AttentionStats:
    """Running check that every attention vector is a distribution."""

    def __init__(self):
        self.alpha_sum_dev = 0.0
        self.beta_sum_dev = 0.0
        self.alpha_min = np.inf
        self.beta_min = np.inf

    def update(self, cache: decoder.SequenceCache):
        a = cache.ALPHA[: cache.n_steps]
        b = cache.BETA[: cache.n_steps]
        self.alpha_sum_dev = max(self.alpha_sum_dev, float(np.abs(a.sum(axis=1) - 1.0).max()))
        self.beta_sum_dev = max(self.beta_sum_dev, float(np.abs(b.sum(axis=1) - 1.0).max()))
        self.alpha_min = min(self.alpha_min, float(a.min()))
        self.beta_min = min(self.beta_min, float(b.min()))

    def as_dict(self) -> dict:
        return {
            "alpha_sum_dev": self.alpha_sum_dev,
            "beta_sum_dev": self.beta_sum_dev,
            "alpha_min": self.alpha_min,
            "beta_min": self.beta_min,
        }


def train(
    samples: list[TrainSample],
    dims: ModelDims,
    config: TrainingConfig,
    collect_attention_stats: bool = False,
) -> tuple[ModelParams, list[dict]]:
    """Train on pre-encoded samples. Deterministic for a fixed config seed:
    parameter init, epoch shuffling, and dropout all derive from it, and
    batch gradients accumulate in sample order."""
    if not samples:
        raise ValueError("empty training set")
    params = init_params(dims, config.seed)
    adam = Adam(dims)
    shuffle_rng = np.random.Generator(np.random.PCG64(config.seed * 2 + 1))
    dropout_rng = np.random.Generator(np.random.PCG64(config.seed * 2 + 2))

    history: list[dict] = []
    for epoch in range(1, config.epochs + 1):
        lr = lr_at_epoch(epoch, config)
        order = shuffle_rng.permutation(len(samples))
        stats = _AttentionStats() if collect_attention_stats else None
        epoch_loss = 0.0
        for batch_start in range(0, len(order), config.batch_size):
            batch = order[batch_start : batch_start + config.batch_size]
            grads = zero_grads(dims)
            batch_loss = 0.0
            for idx in batch:
                s = samples[idx]
                loss, cache = decoder.forward_loss(
                    s.ids, s.grid, s.a_f, params,
                    dropout_p=config.dropout, rng=dropout_rng,
                )
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"training diverged (non-finite loss) at epoch {epoch}"
                    )
                batch_loss += loss
                sample_grads = decoder.backward(cache, params)
                for name in grads:
                    grads[name] += sample_grads[name]
                if stats is not None:
                    stats.update(cache)
            inv = 1.0 / len(batch)
            for name in grads:
                grads[name] *= inv
            adam.step(params, grads, lr)
            epoch_loss += batch_loss
        record = {"epoch": epoch, "lr": lr, "loss": epoch_loss / len(samples)}
        if stats is not None:
            record["attention"] = stats.as_dict()
        history.append(record)
        log.debug("epoch %d lr %.6g loss %.6f", epoch, lr, record["loss"])
    return params, history


def teacher_forced_accuracy(params: ModelParams, samples: list[TrainSample]) -> float:
    """Fraction of predicted positions whose argmax matches the gold token,
    dropout off."""
    correct = 0
    total = 0
    for s in samples:
        _, cache = decoder.forward_loss(s.ids, s.grid, s.a_f, params)
        pred = np.argmax(cache.LOGITS[: cache.n_steps], axis=1)
        correct += int(np.sum(pred == cache.gold_ids[: cache.n_steps]))
        total += cache.n_steps
    return correct / total if total else 0.0
