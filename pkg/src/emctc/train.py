"""Plain SGD training of the toy encoder on the two-part CTC loss."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .corpus import Utterance
from .ctc import LossBreakdown, combined_loss_grad
from .model import EncoderParams, HeadConfig, LrSchedule, backward, forward, lr_at_step
from .sampler import DEFAULT_SIGMA, build_sample_vocab
from .scoring import EmbeddingMatrix

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 16
    epochs: int = 10
    sample_vocab: int = 40
    sigma: float = DEFAULT_SIGMA
    seed: int = 0


@dataclass
class EpochMetrics:
    epoch: int
    step: int
    lr: float
    train_loss: float
    heldout_loss: float
    heldout_wer: float


@dataclass
class TrainResult:
    params: EncoderParams
    best_epoch: int
    metrics: list[EpochMetrics] = field(default_factory=list)


def utterance_loss_grad(params: EncoderParams, utt: Utterance, vocab: EmbeddingMatrix, m: int,
                        rng: np.random.Generator, sigma: float = DEFAULT_SIGMA,
                        heads: HeadConfig = HeadConfig()) -> tuple[LossBreakdown, list[np.ndarray]]:
    seq = utt.label_sequence(vocab)
    tvocab = build_sample_vocab(seq, vocab, m, rng, sigma)
    out, cache = forward(params, utt.features, heads)
    loss, grads = combined_loss_grad(out, vocab, tvocab, seq)
    return loss, backward(params, cache, grads, heads)


def heldout_loss(params, utts, vocab, m, sigma, heads, seed: int = 12345) -> float:
    rng = np.random.default_rng(seed)
    total = 0.0
    for u in utts:
        seq = u.label_sequence(vocab)
        tvocab = build_sample_vocab(seq, vocab, m, rng, sigma)
        out, _ = forward(params, u.features, heads)
        total += combined_loss_grad(out, vocab, tvocab, seq)[0].total
    return total / max(len(utts), 1)


def train(params: EncoderParams, corpus: list[Utterance], vocab: EmbeddingMatrix, sched: LrSchedule,
          config: TrainConfig = TrainConfig(), heldout: list[Utterance] | None = None,
          heads: HeadConfig = HeadConfig(), wer_fn: Callable[[EncoderParams, list[Utterance]], float] | None = None,
          ) -> TrainResult:
    """Train in place on ``corpus``; return the epoch checkpoint with the lowest held-out WER.

    ``wer_fn(params, utts)`` scores held-out recognition; without one, the
    held-out loss picks the checkpoint.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    heldout = heldout or []
    rng = np.random.default_rng(config.seed)
    step = 0
    best: tuple[float, int] | None = None
    best_params = params.copy()
    result = TrainResult(best_params, 0)
    tensors = params.tensors()
    order = np.arange(len(corpus))
    for epoch in range(1, config.epochs + 1):
        rng.shuffle(order)
        running, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            acc = [np.zeros_like(t) for t in tensors]
            batch_loss = 0.0
            for i in batch:
                loss, g = utterance_loss_grad(params, corpus[i], vocab, config.sample_vocab, rng, config.sigma, heads)
                batch_loss += loss.total
                for a, gi in zip(acc, g):
                    a += gi
            if not math.isfinite(batch_loss):
                raise TrainingDiverged(f"loss became {batch_loss} at step {step + 1} (epoch {epoch})")
            step += 1
            lr = lr_at_step(sched, step)
            for t, a in zip(tensors, acc):
                t -= lr * a / len(batch)
            running += batch_loss
            count += len(batch)
        h_loss = heldout_loss(params, heldout, vocab, config.sample_vocab, config.sigma, heads) if heldout else math.nan
        if not math.isfinite(running) or (heldout and not math.isfinite(h_loss)):
            raise TrainingDiverged(f"non-finite loss after epoch {epoch}")
        h_wer = wer_fn(params, heldout) if (wer_fn and heldout) else math.nan
        m = EpochMetrics(epoch, step, lr_at_step(sched, max(step, 1)), running / count, h_loss, h_wer)
        result.metrics.append(m)
        log.info("epoch %d step %d train %.3f heldout %.3f wer %.4f", epoch, step, m.train_loss, h_loss, h_wer)
        key = h_wer if math.isfinite(h_wer) else h_loss
        if not math.isfinite(key):
            key = m.train_loss
        if best is None or key < best[0]:
            best = (key, epoch)
            result.params = params.copy()
            result.best_epoch = epoch
    return result
