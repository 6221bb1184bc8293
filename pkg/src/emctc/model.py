"""Toy frame encoder: a windowed two-hidden-layer perceptron with timestamp heads.

The final projection emits, per frame, ``L`` embeddings, the two blank
magnitudes, ``L`` raw offsets and ``L`` raw durations. Offsets go through a
scaled tanh and are added to the frame time; durations through a scaled
sigmoid.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._io import atomic_write_bytes
from .ctc import FrameArrays
from .scoring import EmbeddingMatrix, FrameOutput

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class HeadConfig:
    offset_limit: float = 1.0
    duration_scale: float = 2.0
    frame_period: float = 0.040

    def __post_init__(self):
        if min(self.offset_limit, self.duration_scale, self.frame_period) <= 0:
            raise ValueError("head scales and frame period must be positive")


@dataclass(frozen=True)
class LrSchedule:
    p1: int = 30_000
    p2: int = 270_000
    gamma_decay: int = 30_000
    peak: float = 0.01 / math.sqrt(272)

    def __post_init__(self):
        if min(self.p1, self.p2, self.gamma_decay) <= 0 or self.peak <= 0:
            raise ValueError("schedule lengths and peak rate must be positive")


def lr_at_step(sched: LrSchedule, s: int) -> float:
    """Linear warm-up, inverse-square-root decay, then halving every ``gamma_decay`` steps."""
    if s < 1:
        raise ValueError("steps are counted from 1")
    p1, p2, g, R = sched.p1, sched.p2, sched.gamma_decay, sched.peak
    if s <= p1:
        return R * s / p1
    if s <= p1 + p2:
        return R * math.sqrt(p1) / math.sqrt(s)
    return R * math.sqrt(p1 / (p1 + p2)) * 2.0 ** ((p1 + p2 - s) / g)


@dataclass
class EncoderParams:
    """Weights of the windowed perceptron plus the shape metadata needed to use them."""

    feat_dim: int
    dim: int
    num_hyps: int
    context: int
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    @property
    def out_width(self) -> int:
        return self.num_hyps * self.dim + 2 + 2 * self.num_hyps

    @property
    def in_width(self) -> int:
        return (2 * self.context + 1) * self.feat_dim

    @classmethod
    def init(cls, feat_dim: int, dim: int, num_hyps: int = 1, hidden=(64, 64), context: int = 2,
             rng: np.random.Generator | None = None, duration_init: float | None = None,
             heads: HeadConfig = HeadConfig()) -> "EncoderParams":
        """Gaussian weights scaled by fan-in and zero biases.

        The timestamp-head columns of the last layer start at zero, so an
        untrained model stamps each word at its frame time. ``duration_init`` sets the duration-head bias so that an untrained
        model predicts that duration (seconds) everywhere.
        """
        rng = rng if rng is not None else np.random.default_rng(0)
        p = cls(feat_dim, dim, num_hyps, context)
        sizes = [p.in_width, *hidden, p.out_width]
        for a, b in zip(sizes, sizes[1:]):
            p.weights.append(rng.normal(0.0, 1.0 / math.sqrt(a), size=(a, b)))
            p.biases.append(np.zeros(b))
        p.weights[-1][:, num_hyps * dim + 2:] = 0.0
        if duration_init is not None:
            frac = duration_init / heads.duration_scale
            if not 0.0 < frac < 1.0:
                raise ValueError("duration_init must lie strictly inside the duration head's range")
            p.biases[-1][num_hyps * dim + 2 + num_hyps:] = math.log(frac / (1.0 - frac))
        return p

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def num_params(self) -> int:
        return sum(t.size for t in self.tensors())

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.feat_dim, self.dim, self.num_hyps, self.context,
                             [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors()])

    def set_flat(self, vec: np.ndarray) -> None:
        pos = 0
        for t in self.tensors():
            t[...] = vec[pos:pos + t.size].reshape(t.shape)
            pos += t.size


def window(features: np.ndarray, context: int) -> np.ndarray:
    """Stack each frame with ``context`` neighbours on each side (zero padded)."""
    T, F = features.shape
    padded = np.zeros((T + 2 * context, F))
    padded[context:context + T] = features
    return np.concatenate([padded[i:i + T] for i in range(2 * context + 1)], axis=1)


@dataclass
class _Cache:
    x: np.ndarray
    hidden: list[np.ndarray]
    raw: np.ndarray
    tanh_off: np.ndarray
    sig_dur: np.ndarray


def _split(params: EncoderParams, raw: np.ndarray):
    T, L, D = raw.shape[0], params.num_hyps, params.dim
    emb = raw[:, :L * D].reshape(T, L, D)
    b_s = raw[:, L * D]
    b_z = raw[:, L * D + 1]
    off = raw[:, L * D + 2:L * D + 2 + L]
    dur = raw[:, L * D + 2 + L:]
    return emb, b_s, b_z, off, dur


def forward(params: EncoderParams, features, heads: HeadConfig = HeadConfig()) -> tuple[FrameArrays, _Cache]:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ValueError("features must be a non-empty (T, F) array")
    if features.shape[1] != params.feat_dim:
        raise ValueError(f"feature width {features.shape[1]} does not match encoder input {params.feat_dim}")
    x = window(features, params.context)
    h = x
    hidden = []
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ w + b)
        hidden.append(h)
    raw = h @ params.weights[-1] + params.biases[-1]
    emb, b_s, b_z, off, dur = _split(params, raw)
    T = features.shape[0]
    tanh_off = np.tanh(off)
    sig_dur = 0.5 * (1.0 + np.tanh(0.5 * dur))  # overflow-free sigmoid
    frame_t = np.arange(T)[:, None] * heads.frame_period
    stamps = np.stack([frame_t + heads.offset_limit * tanh_off, heads.duration_scale * sig_dur], axis=-1)
    out = FrameArrays(emb.copy(), b_s.copy(), b_z.copy(), stamps)
    return out, _Cache(x, hidden, raw, tanh_off, sig_dur)


def encode(params: EncoderParams, features, heads: HeadConfig = HeadConfig()) -> list[FrameOutput]:
    out, _ = forward(params, features, heads)
    return to_frames(out)


def to_frames(out: FrameArrays) -> list[FrameOutput]:
    return [FrameOutput(out.embeddings[t], float(out.blank_s[t]), float(out.blank_z[t]), out.timestamps[t])
            for t in range(len(out))]


def backward(params: EncoderParams, cache: _Cache, grads: FrameArrays,
             heads: HeadConfig = HeadConfig()) -> list[np.ndarray]:
    """Parameter gradients in the order of ``params.tensors()``."""
    T = cache.raw.shape[0]
    L, D = params.num_hyps, params.dim
    g_raw = np.empty_like(cache.raw)
    g_raw[:, :L * D] = grads.embeddings.reshape(T, L * D)
    g_raw[:, L * D] = grads.blank_s
    g_raw[:, L * D + 1] = grads.blank_z
    g_raw[:, L * D + 2:L * D + 2 + L] = grads.timestamps[..., 0] * heads.offset_limit * (1.0 - cache.tanh_off**2)
    g_raw[:, L * D + 2 + L:] = grads.timestamps[..., 1] * heads.duration_scale * cache.sig_dur * (1.0 - cache.sig_dur)

    out: list[np.ndarray] = []
    inputs = [cache.x, *cache.hidden]
    g = g_raw
    for layer in range(len(params.weights) - 1, -1, -1):
        a = inputs[layer]
        out.append(g.sum(axis=0))
        out.append(a.T @ g)
        if layer > 0:
            g = (g @ params.weights[layer].T) * (1.0 - inputs[layer] ** 2)
    out.reverse()  # now [w0, b0, w1, b1, ...]
    return out


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, params: EncoderParams, heads: HeadConfig = HeadConfig(), extra: dict | None = None,
                    vocab=None) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "feat_dim": params.feat_dim,
        "dim": params.dim,
        "num_hyps": params.num_hyps,
        "context": params.context,
        "layers": len(params.weights),
        "heads": asdict(heads),
        "extra": extra or {},
    }
    arrays = {f"w{i}": w for i, w in enumerate(params.weights)}
    arrays.update({f"b{i}": b for i, b in enumerate(params.biases)})
    if vocab is not None:
        arrays["vocab_vectors"] = vocab.vectors
        meta["vocab_ids"] = list(vocab.word_ids)
    buf = io.BytesIO()
    np.savez(buf, meta=np.array(json.dumps(meta)), **arrays)
    atomic_write_bytes(path, buf.getvalue())


def load_checkpoint(path):
    """Returns (params, heads, extra, vocab or None)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        n = meta["layers"]
        params = EncoderParams(meta["feat_dim"], meta["dim"], meta["num_hyps"], meta["context"],
                               [data[f"w{i}"].copy() for i in range(n)], [data[f"b{i}"].copy() for i in range(n)])
        vocab = None
        if "vocab_vectors" in data:
            vocab = EmbeddingMatrix(tuple(meta["vocab_ids"]), data["vocab_vectors"].copy())
    return params, HeadConfig(**meta["heads"]), meta["extra"], vocab
