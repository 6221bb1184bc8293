"""Embedding-matching frame scores.

Every score vector produced here has the blank at index 0 and the words at
indices 1..n, in vocabulary order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write_text


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Immutable vocabulary in embedding space (one row per word)."""

    word_ids: tuple[str, ...]
    vectors: np.ndarray  # (n, dim)
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] < 1:
            raise ValueError(f"vectors must be (n, dim) with dim >= 1, got {vectors.shape}")
        if len(self.word_ids) != vectors.shape[0]:
            raise ValueError("word_ids and vectors disagree on vocabulary size")
        index = {w: i for i, w in enumerate(self.word_ids)}
        if len(index) != len(self.word_ids):
            raise ValueError("word ids must be unique")
        vectors.setflags(write=False)
        object.__setattr__(self, "word_ids", tuple(self.word_ids))
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "_index", index)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def index(self, word_id: str) -> int:
        """0-based row of ``word_id`` (its score index is this plus one)."""
        return self._index[word_id]

    def __contains__(self, word_id: str) -> bool:
        return word_id in self._index

    @classmethod
    def random(cls, n: int, dim: int, rng: np.random.Generator, prefix: str = "w") -> "EmbeddingMatrix":
        width = len(str(n - 1))
        ids = [f"{prefix}{i:0{width}d}" for i in range(n)]
        return cls(tuple(ids), rng.standard_normal((n, dim)))


@dataclass
class FrameOutput:
    """Encoder products for one frame.

    ``embeddings`` is (L, dim); ``timestamps`` is (L, 2) holding (tau, theta)
    in seconds for each hypothesis.
    """

    embeddings: np.ndarray
    blank_s: float
    blank_z: float
    timestamps: np.ndarray

    def __post_init__(self):
        self.embeddings = np.atleast_2d(np.asarray(self.embeddings, dtype=np.float64))
        self.timestamps = np.atleast_2d(np.asarray(self.timestamps, dtype=np.float64))
        if self.embeddings.shape[0] < 1:
            raise ValueError("a frame needs at least one embedding")
        if self.timestamps.shape != (self.embeddings.shape[0], 2):
            raise ValueError("need one (tau, theta) pair per embedding")

    @property
    def num_hyps(self) -> int:
        return self.embeddings.shape[0]


@dataclass
class TimestampedEntry:
    word_id: str
    vector: np.ndarray
    alpha: float
    beta: float
    is_reference: bool = False


@dataclass
class TimestampedVocab:
    """Per-utterance vocabulary of (embedding, start, duration) tuples."""

    entries: list[TimestampedEntry]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def vectors(self) -> np.ndarray:
        return np.array([e.vector for e in self.entries], dtype=np.float64)

    @property
    def stamps(self) -> np.ndarray:
        return np.array([[e.alpha, e.beta] for e in self.entries], dtype=np.float64)


def _check_dim(f: np.ndarray, dim: int) -> None:
    if f.shape[-1] != dim:
        raise ValueError(f"embedding length {f.shape[-1]} does not match vocabulary dim {dim}")


def sq_dists(frames: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Squared distances between each row of ``frames`` and each row of ``vectors``."""
    # Expanded form is faster but loses the exact zero at f == g.
    diff = frames[..., None, :] - vectors
    return np.einsum("...ij,...ij->...i", diff, diff)


def l2_scores(f, vocab: EmbeddingMatrix, blank_mag: float) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1:
        raise ValueError("l2_scores takes one embedding; use multi_hyp_scores for several")
    _check_dim(f, vocab.dim)
    out = np.empty(len(vocab) + 1)
    out[0] = -blank_mag**2
    out[1:] = -sq_dists(f, vocab.vectors)
    return out


def multi_hyp_scores(frames, vocab: EmbeddingMatrix, blank_mag: float) -> np.ndarray:
    """Word scores summed over the L hypothesised embeddings of one frame."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 1:
        frames = frames[None, :]
    if frames.shape[0] == 0:
        raise ValueError("need at least one embedding")
    _check_dim(frames, vocab.dim)
    out = np.empty(len(vocab) + 1)
    out[0] = -blank_mag**2
    out[1:] = -sq_dists(frames, vocab.vectors).sum(axis=0)
    return out


def normalize_to(v, c: float) -> np.ndarray:
    """Rescale rows of ``v`` so that each has squared norm ``c``."""
    v = np.asarray(v, dtype=np.float64)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero vector")
    return v * (np.sqrt(c) / norms)


def inner_product_scores(f, vocab: EmbeddingMatrix, c: float | None = None, blank_mag: float = 0.0) -> np.ndarray:
    """Inner-product word scores after projecting everything onto the sphere v.v = c.

    ``c`` defaults to the embedding dimension.
    """
    if c is None:
        c = float(vocab.dim)
    if c <= 0:
        raise ValueError("normalization constant c must be positive")
    f = np.asarray(f, dtype=np.float64)
    _check_dim(f, vocab.dim)
    fn = normalize_to(f, c)
    gn = normalize_to(vocab.vectors, c)
    out = np.empty(len(vocab) + 1)
    out[0] = -blank_mag**2
    out[1:] = gn @ fn
    return out


def log_softmax(scores, axis: int = -1) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    m = np.max(s, axis=axis, keepdims=True)
    shifted = s - m
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def z_combine(s, d):
    """Fuse an embedding score with a timestamp distance: s - d + s*d."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("timestamp distance must be non-negative")
    out = s - d + s * d
    return float(out) if np.ndim(out) == 0 else out


def timestamp_distance(u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    diff = u - v
    out = np.sum(diff * diff, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def timestamped_scores_single(frame: FrameOutput, tvocab: TimestampedVocab) -> np.ndarray:
    if frame.num_hyps != 1:
        raise ValueError("single-hypothesis scoring needs a frame with L = 1")
    scores, _ = timestamped_scores_multi(frame, tvocab)
    return scores


def timestamped_scores_multi(frame: FrameOutput, tvocab: TimestampedVocab) -> tuple[np.ndarray, np.ndarray]:
    """Timestamped scores for one frame, plus the hypothesis chosen per entry.

    Each entry's timestamp distance is measured against the hypothesis whose
    embedding matches that entry best; ties go to the lowest hypothesis index.
    The returned indices are 1-based to match hypothesis numbering.
    """
    g = tvocab.vectors
    _check_dim(frame.embeddings, g.shape[1])
    per_k = -sq_dists(frame.embeddings, g)  # (L, m)
    s = per_k.sum(axis=0)
    best = np.argmax(per_k, axis=0)  # first maximum wins
    u = frame.timestamps[best]  # (m, 2)
    d = timestamp_distance(u, tvocab.stamps)
    out = np.empty(len(tvocab) + 1)
    out[0] = -frame.blank_z**2
    out[1:] = z_combine(s, d)
    return out, best + 1


# -- embedding matrix file ---------------------------------------------------

def write_embeddings(path, vocab: EmbeddingMatrix) -> None:
    lines = [f"{vocab.dim} {len(vocab)}"]
    for wid, vec in zip(vocab.word_ids, vocab.vectors):
        lines.append(" ".join([wid] + [f"{x:.17g}" for x in vec]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_embeddings(path) -> EmbeddingMatrix:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: header must be 'dim n'")
        dim, n = int(header[0]), int(header[1])
        ids: list[str] = []
        rows: list[list[float]] = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values after the word id")
            ids.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(ids) != n:
        raise ValueError(f"{path}: header promises {n} words, found {len(ids)}")
    return EmbeddingMatrix(tuple(ids), np.array(rows, dtype=np.float64).reshape(n, dim))


