"""CTC posteriors, gradients and the two-part (word + timestamped word) loss.

Posterior grids are ``(T, n+1)`` arrays of log probabilities with the blank
in column 0. Label sequences hold 1-based word indices (score columns).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .scoring import EmbeddingMatrix, TimestampedVocab, log_softmax, sq_dists

BLANK = 0
NEG_INF = -math.inf


@dataclass
class LabelSequence:
    labels: list[int]
    timestamps: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        self.labels = [int(x) for x in self.labels]
        if any(x < 1 for x in self.labels):
            raise ValueError("labels are 1-based word indices; blank is not a label")
        if self.timestamps and len(self.timestamps) != len(self.labels):
            raise ValueError("timestamps must align 1:1 with labels")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class LossBreakdown:
    loss_s: float
    loss_z: float

    @property
    def total(self) -> float:
        return self.loss_s + self.loss_z


def _labels(seq) -> list[int]:
    return list(seq.labels) if isinstance(seq, LabelSequence) else [int(x) for x in seq]


def expand_with_blanks(seq) -> np.ndarray:
    labels = _labels(seq)
    ext = np.zeros(2 * len(labels) + 1, dtype=np.int64)
    ext[1::2] = labels
    return ext


def min_frames(seq) -> int:
    """Fewest frames that can carry ``seq`` (repeats need a separating blank)."""
    labels = _labels(seq)
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def _skip_mask(ext: np.ndarray) -> np.ndarray:
    skip = np.zeros(len(ext), dtype=bool)
    skip[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    return skip


def ctc_forward(logp: np.ndarray, seq) -> tuple[float, np.ndarray]:
    """Log-space forward pass. Returns (log P(W|X), log alpha of shape (T, S))."""
    logp = np.asarray(logp, dtype=np.float64)
    ext = expand_with_blanks(seq)
    T, S = logp.shape[0], len(ext)
    skip = _skip_mask(ext)
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = logp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = logp[0, ext[1]]
    emit = logp[:, ext]
    for t in range(1, T):
        prev = alpha[t - 1]
        a = prev.copy()
        a[1:] = np.logaddexp(a[1:], prev[:-1])
        a[2:] = np.where(skip[2:], np.logaddexp(a[2:], prev[:-2]), a[2:])
        alpha[t] = a + emit[t]
    ends = alpha[-1, -2:] if S > 1 else alpha[-1, -1:]
    return float(np.logaddexp.reduce(ends)), alpha


def ctc_backward(logp: np.ndarray, seq) -> np.ndarray:
    """Log beta, excluding the emission at the current frame."""
    logp = np.asarray(logp, dtype=np.float64)
    ext = expand_with_blanks(seq)
    T, S = logp.shape[0], len(ext)
    skip = _skip_mask(ext)
    beta = np.full((T, S), NEG_INF)
    beta[-1, -1] = 0.0
    if S > 1:
        beta[-1, -2] = 0.0
    emit = logp[:, ext]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        b = nxt.copy()
        b[:-1] = np.logaddexp(b[:-1], nxt[1:])
        b[:-2] = np.where(skip[2:], np.logaddexp(b[:-2], nxt[2:]), b[:-2])
        beta[t] = b
    return beta


def ctc_log_posterior(logp: np.ndarray, seq) -> float:
    """log P(W|X); ``-inf`` when W cannot fit in the available frames."""
    logp = np.asarray(logp, dtype=np.float64)
    if logp.shape[0] < 1 or min_frames(seq) > logp.shape[0]:
        return NEG_INF
    return ctc_forward(logp, seq)[0]


def collapse(path) -> tuple[int, ...]:
    """Merge repeated labels, then drop blanks."""
    return tuple(k for k, _ in itertools.groupby(path) if k != BLANK)


@lru_cache(maxsize=32)
def _path_table(K: int, T: int):
    paths = np.array(list(itertools.product(range(K), repeat=T)), dtype=np.int64).reshape(-1, T)
    keys: dict[tuple[int, ...], int] = {}
    ids = np.array([keys.setdefault(collapse(p), len(keys)) for p in paths.tolist()], dtype=np.int64)
    return paths, ids, keys


def brute_force_ctc(logp: np.ndarray, seq, limit: int = 10**7) -> float:
    """P(W|X) by enumerating every frame-level path (test oracle)."""
    logp = np.asarray(logp, dtype=np.float64)
    T, K = logp.shape
    if K**T > limit:
        raise ValueError(f"{K}^{T} paths exceeds the enumeration limit {limit}")
    paths, ids, keys = _path_table(K, T)
    target = keys.get(tuple(_labels(seq)))
    if target is None:
        return 0.0
    chosen = paths[ids == target]
    return float(np.exp(logp[np.arange(T), chosen]).prod(axis=1).sum())


def ctc_occupancy(logp: np.ndarray, seq) -> tuple[float, np.ndarray]:
    """Per-frame label posteriors gamma[t, k] under the CTC alignment posterior."""
    logp = np.asarray(logp, dtype=np.float64)
    T, K = logp.shape
    logP = ctc_log_posterior(logp, seq)
    gamma = np.zeros((T, K))
    if logP == NEG_INF:
        return logP, gamma
    _, alpha = ctc_forward(logp, seq)
    beta = ctc_backward(logp, seq)
    occ = np.exp(alpha + beta - logP)
    ext = expand_with_blanks(seq)
    for s, k in enumerate(ext):
        gamma[:, k] += occ[:, s]
    return logP, gamma


def ctc_gradient(logp: np.ndarray, seq) -> tuple[np.ndarray, bool]:
    """d(-log P)/d(log p[t, k]); returns (gradient, feasible)."""
    logP, gamma = ctc_occupancy(logp, seq)
    if logP == NEG_INF:
        return gamma, False
    return -gamma, True


def ctc_presoftmax_gradient(scores: np.ndarray, seq) -> tuple[float, np.ndarray]:
    """Loss -log P and its gradient with respect to pre-softmax scores."""
    logp = log_softmax(scores)
    logP, gamma = ctc_occupancy(logp, seq)
    if logP == NEG_INF:
        return math.inf, np.zeros_like(logp)
    return -logP, np.exp(logp) - gamma


# -- two-part loss -----------------------------------------------------------

@dataclass
class FrameArrays:
    """Encoder outputs for a whole utterance, stacked frame-wise."""

    embeddings: np.ndarray  # (T, L, dim)
    blank_s: np.ndarray  # (T,)
    blank_z: np.ndarray  # (T,)
    timestamps: np.ndarray  # (T, L, 2)

    @classmethod
    def from_frames(cls, frames) -> "FrameArrays":
        return cls(
            np.stack([f.embeddings for f in frames]),
            np.array([f.blank_s for f in frames], dtype=np.float64),
            np.array([f.blank_z for f in frames], dtype=np.float64),
            np.stack([f.timestamps for f in frames]),
        )

    def __len__(self) -> int:
        return self.embeddings.shape[0]


def reference_targets(tvocab: TimestampedVocab, vocab: EmbeddingMatrix, seq: LabelSequence) -> list[int]:
    """Map each timestamped reference label to its entry (1-based) in ``tvocab``."""
    if not seq.timestamps and seq.labels:
        raise ValueError("the timestamped loss needs reference timestamps")
    taken: set[int] = set()
    targets = []
    for label, (alpha, beta) in zip(seq.labels, seq.timestamps):
        wid = vocab.word_ids[label - 1]
        for j, e in enumerate(tvocab.entries):
            if j not in taken and e.is_reference and e.word_id == wid and e.alpha == alpha and e.beta == beta:
                taken.add(j)
                targets.append(j + 1)
                break
        else:
            raise ValueError(f"no reference entry for {wid!r} at ({alpha}, {beta}) in the sampled vocabulary")
    return targets


def word_score_grid(emb: np.ndarray, blank: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Summed multi-hypothesis scores for every frame: (T, n+1)."""
    s = -sq_dists(emb, vectors).sum(axis=1)
    return np.concatenate([-(blank**2)[:, None], s], axis=1)


def _emb_grad(emb: np.ndarray, ds: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    # d/dE[t,k] of sum_i ds[t,i] * (-|E[t,k] - g_i|^2)
    total = ds.sum(axis=1)[:, None, None]
    return -2.0 * (emb * total - (ds @ vectors)[:, None, :])


def combined_loss_grad(out: FrameArrays, vocab: EmbeddingMatrix, tvocab: TimestampedVocab,
                       seq: LabelSequence) -> tuple[LossBreakdown, FrameArrays]:
    """L_S + L_Z and its gradient with respect to every frame output."""
    targets = reference_targets(tvocab, vocab, seq)
    E, U = out.embeddings, out.timestamps
    T, L, _ = E.shape

    scores_s = word_score_grid(E, out.blank_s, vocab.vectors)
    loss_s, dS = ctc_presoftmax_gradient(scores_s, seq.labels)

    gz, vz = tvocab.vectors, tvocab.stamps
    per_k = -sq_dists(E, gz)  # (T, L, m)
    sz = per_k.sum(axis=1)
    best = np.argmax(per_k, axis=1)  # (T, m)
    ub = np.take_along_axis(U, best[..., None], axis=1)  # (T, m, 2)
    diff = ub - vz
    d = np.einsum("tmc,tmc->tm", diff, diff)
    z = sz - d + sz * d
    scores_z = np.concatenate([-(out.blank_z**2)[:, None], z], axis=1)
    loss_z, dZ = ctc_presoftmax_gradient(scores_z, targets)

    grad_e = _emb_grad(E, dS[:, 1:], vocab.vectors)
    dz = dZ[:, 1:]
    grad_e += _emb_grad(E, dz * (1.0 + d), gz)
    dd = dz * (sz - 1.0)
    grad_u = np.zeros_like(U)
    contrib = 2.0 * dd[..., None] * diff  # (T, m, 2)
    for k in range(L):
        grad_u[:, k, :] = np.where((best == k)[..., None], contrib, 0.0).sum(axis=1)
    grads = FrameArrays(
        grad_e,
        -2.0 * out.blank_s * dS[:, 0],
        -2.0 * out.blank_z * dZ[:, 0],
        grad_u,
    )
    return LossBreakdown(loss_s, loss_z), grads


def combined_loss(frames, vocab: EmbeddingMatrix, tvocab: TimestampedVocab, seq: LabelSequence) -> LossBreakdown:
    out = frames if isinstance(frames, FrameArrays) else FrameArrays.from_frames(frames)
    return combined_loss_grad(out, vocab, tvocab, seq)[0]
