"""Per-utterance timestamped vocabularies for the timestamped-word loss."""

from __future__ import annotations

import numpy as np

from .ctc import LabelSequence
from .scoring import EmbeddingMatrix, TimestampedEntry, TimestampedVocab

MIN_DURATION = 0.02
DEFAULT_SIGMA = 0.08


def perturb_timestamp(v, rng: np.random.Generator, sigma: float = DEFAULT_SIGMA) -> tuple[float, float]:
    alpha, beta = v
    da, db = rng.normal(0.0, sigma, size=2)
    return float(alpha + da), float(max(MIN_DURATION, beta + db))


def build_sample_vocab(refs: LabelSequence, base: EmbeddingMatrix, m: int, rng: np.random.Generator,
                       sigma: float = DEFAULT_SIGMA) -> TimestampedVocab:
    """References, one perturbed copy of each, then random other words with borrowed timestamps.

    Entries come in that order, so the first ``len(refs)`` entries are the
    references in transcript order. Random words are drawn without
    replacement from the words absent from the transcript.
    """
    r = len(refs)
    if r == 0:
        raise ValueError("an utterance needs at least one reference word")
    if len(refs.timestamps) != r:
        raise ValueError("reference words need timestamps")
    if m < 3 * r:
        raise ValueError(f"m={m} is too small for {r} references (need at least {3 * r})")
    present = set(refs.labels)
    pool = np.array([i for i in range(1, len(base) + 1) if i not in present])
    n_random = m - 2 * r
    if n_random > len(pool):
        raise ValueError(f"need {n_random} distinct non-reference words, vocabulary has {len(pool)}")

    def entry(label: int, ts, is_ref: bool) -> TimestampedEntry:
        return TimestampedEntry(base.word_ids[label - 1], base.vectors[label - 1], float(ts[0]), float(ts[1]), is_ref)

    entries = [entry(lab, ts, True) for lab, ts in zip(refs.labels, refs.timestamps)]
    entries += [entry(lab, perturb_timestamp(ts, rng, sigma), False) for lab, ts in zip(refs.labels, refs.timestamps)]
    words = rng.choice(pool, size=n_random, replace=False)
    sources = rng.integers(0, r, size=n_random)
    for w, src in zip(words, sources):
        entries.append(entry(int(w), perturb_timestamp(refs.timestamps[src], rng, sigma), False))
    return TimestampedVocab(entries)
