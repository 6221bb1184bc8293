"""Synthetic utterances with exact word timestamps, and the corpus file format.

Each word is rendered as a block of identical frames, ``A @ g_w`` plus
Gaussian noise, where ``A`` is a fixed random mixing matrix and ``g_w`` the
word's embedding. Silence frames carry the noise alone. Every word has a
fixed length in frames, so a word's duration is a property of its identity.

Corpus files are JSON lines, one utterance per line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write_text
from .ctc import LabelSequence
from .scoring import EmbeddingMatrix

ENTITY_PREFIX = "ent"


class CorpusFormatError(ValueError):
    pass


@dataclass
class Utterance:
    id: str
    features: np.ndarray  # (T, F)
    words: list[str]
    starts_ms: list[int]
    durations_ms: list[int]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if not (len(self.words) == len(self.starts_ms) == len(self.durations_ms)):
            raise ValueError(f"{self.id}: words, starts and durations differ in length")

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    @property
    def starts(self) -> list[float]:
        return [s / 1000.0 for s in self.starts_ms]

    @property
    def durations(self) -> list[float]:
        return [d / 1000.0 for d in self.durations_ms]

    def label_sequence(self, vocab: EmbeddingMatrix) -> LabelSequence:
        labels = [vocab.index(w) + 1 for w in self.words]
        return LabelSequence(labels, list(zip(self.starts, self.durations)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Utterance):
            return NotImplemented
        return (self.id == other.id and self.words == other.words and self.starts_ms == other.starts_ms
                and self.durations_ms == other.durations_ms and self.features.shape == other.features.shape
                and bool(np.array_equal(self.features, other.features)))


def is_entity(word_id: str) -> bool:
    return word_id.startswith(ENTITY_PREFIX)


@dataclass(frozen=True)
class GenSpec:
    vocab_size: int = 50
    dim: int = 16
    feat_dim: int = 24
    frames_per_word: tuple[int, int] = (3, 6)
    gap_frames: tuple[int, int] = (1, 3)
    words_per_utt: tuple[int, int] = (2, 5)
    noise_std: float = 0.3
    confusable_fraction: float = 0.0
    n_entities: int = 5
    frame_period: float = 0.040
    mixing_seed: int = 1234

    def __post_init__(self):
        for name in ("frames_per_word", "gap_frames", "words_per_utt"):
            lo, hi = getattr(self, name)
            if lo > hi or hi <= 0 or lo < 0:
                raise ValueError(f"{name} must be a non-empty non-negative range, got {(lo, hi)}")
        if self.frames_per_word[0] < 1 or self.words_per_utt[0] < 1:
            raise ValueError("words need at least one frame and utterances at least one word")
        if not 0.0 <= self.confusable_fraction <= 1.0:
            raise ValueError("confusable_fraction must lie in [0, 1]")
        if self.vocab_size < 1 or self.dim < 1 or self.feat_dim < 1 or self.noise_std < 0:
            raise ValueError("sizes must be positive and noise_std non-negative")
        if not 0 <= self.n_entities <= self.vocab_size:
            raise ValueError("n_entities must fit in the vocabulary")

    def word_ids(self) -> list[str]:
        n_plain = self.vocab_size - self.n_entities
        width = len(str(max(self.vocab_size - 1, 1)))
        return ([f"w{i:0{width}d}" for i in range(n_plain)]
                + [f"{ENTITY_PREFIX}{i:0{width}d}" for i in range(self.n_entities)])

    def make_vocab(self, rng: np.random.Generator) -> EmbeddingMatrix:
        return EmbeddingMatrix(tuple(self.word_ids()), rng.standard_normal((self.vocab_size, self.dim)))

    @property
    def confusable_words(self) -> tuple[int, int, int]:
        """0-based rows of (w_a, w_b, w_s): w_a sounds like w_b followed by w_s."""
        n = self.vocab_size - self.n_entities
        return n - 3, n - 2, n - 1


@dataclass
class Renderer:
    """Fixed word renderings derived from a GenSpec and a vocabulary."""

    spec: GenSpec
    vocab: EmbeddingMatrix
    mixing: np.ndarray = field(init=False)
    lengths: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.vocab.dim != self.spec.dim:
            raise ValueError("vocabulary dim does not match the generator spec")
        rng = np.random.default_rng(self.spec.mixing_seed)
        self.mixing = rng.normal(0.0, 1.0 / np.sqrt(self.spec.dim), size=(self.spec.feat_dim, self.spec.dim))
        lo, hi = self.spec.frames_per_word
        self.lengths = rng.integers(lo, hi + 1, size=len(self.vocab))
        if self.spec.confusable_fraction > 0:
            a, b, s = self.spec.confusable_words
            self.lengths[a] = self.lengths[b] + self.lengths[s]

    def word_frames(self, row: int) -> np.ndarray:
        """Noise-free frames for the word at vocabulary row ``row``."""
        if self.spec.confusable_fraction > 0:
            a, b, s = self.spec.confusable_words
            if row == a:
                return np.vstack([self.word_frames(b), self.word_frames(s)])
        clean = self.mixing @ self.vocab.vectors[row]
        return np.tile(clean, (int(self.lengths[row]), 1))

    def regular_words(self) -> np.ndarray:
        rows = np.arange(len(self.vocab))
        if self.spec.confusable_fraction > 0:
            rows = rows[~np.isin(rows, self.spec.confusable_words)]
        return rows

    def render(self, uid: str, rows, rng: np.random.Generator, transcripts=None) -> list[Utterance]:
        """Render ``rows`` with random gaps; ``transcripts`` maps the same audio to alternative word lists."""
        sp = self.spec
        fp_ms = int(round(sp.frame_period * 1000))
        blocks = []
        starts, durs = [], []
        t = int(rng.integers(sp.gap_frames[0], sp.gap_frames[1] + 1))
        blocks.append(np.zeros((t, sp.feat_dim)))
        for row in rows:
            frames = self.word_frames(int(row))
            starts.append(t * fp_ms)
            durs.append(frames.shape[0] * fp_ms)
            blocks.append(frames)
            t += frames.shape[0]
            gap = int(rng.integers(sp.gap_frames[0], sp.gap_frames[1] + 1))
            blocks.append(np.zeros((gap, sp.feat_dim)))
            t += gap
        clean = np.vstack(blocks)
        feats = clean + rng.normal(0.0, sp.noise_std, size=clean.shape)
        words = [self.vocab.word_ids[int(r)] for r in rows]
        out = [Utterance(uid, feats, words, starts, durs)]
        for suffix, fn in (transcripts or {}).items():
            w2, s2, d2 = fn(words, starts, durs)
            out.append(Utterance(uid + suffix, feats.copy(), w2, s2, d2))
        return out


def gen_utterance(spec: GenSpec, base: EmbeddingMatrix, rng: np.random.Generator, uid: str = "utt",
                  renderer: Renderer | None = None) -> Utterance:
    renderer = renderer or Renderer(spec, base)
    pool = renderer.regular_words()
    if len(pool) == 0:
        raise ValueError("vocabulary is empty")
    k = int(rng.integers(spec.words_per_utt[0], spec.words_per_utt[1] + 1))
    rows = rng.choice(pool, size=k)
    return renderer.render(uid, rows, rng)[0]


def gen_confusable_pair(spec: GenSpec, base: EmbeddingMatrix, rng: np.random.Generator, uid: str = "pair",
                        renderer: Renderer | None = None) -> tuple[Utterance, Utterance]:
    """Same audio transcribed once with the compound-sounding w_a and once as w_b w_s."""
    if spec.confusable_fraction <= 0:
        raise ValueError("confusable pairs need confusable_fraction > 0 so the compound rendering exists")
    renderer = renderer or Renderer(spec, base)
    a, b, s = spec.confusable_words
    pool = renderer.regular_words()
    k = int(rng.integers(spec.words_per_utt[0], spec.words_per_utt[1] + 1))
    rows = list(rng.choice(pool, size=max(k - 1, 0)))
    pos = int(rng.integers(0, len(rows) + 1))
    rows.insert(pos, a)
    wa, wb, ws = (base.word_ids[i] for i in (a, b, s))
    len_b_ms = int(renderer.lengths[b]) * int(round(spec.frame_period * 1000))

    def split(words, starts, durs):
        i = words.index(wa)
        w2 = words[:i] + [wb, ws] + words[i + 1:]
        s2 = starts[:i] + [starts[i], starts[i] + len_b_ms] + starts[i + 1:]
        d2 = durs[:i] + [len_b_ms, durs[i] - len_b_ms] + durs[i + 1:]
        return w2, s2, d2

    first, second = renderer.render(uid, rows, rng, transcripts={"b": split})
    first.id = uid + "a"
    return first, second


def gen_corpus(spec: GenSpec, base: EmbeddingMatrix, count: int, rng: np.random.Generator,
               prefix: str = "utt") -> list[Utterance]:
    renderer = Renderer(spec, base)
    out: list[Utterance] = []
    i = 0
    while len(out) < count:
        uid = f"{prefix}{i:05d}"
        if spec.confusable_fraction > 0 and rng.random() < spec.confusable_fraction and len(out) + 2 <= count:
            out.extend(gen_confusable_pair(spec, base, rng, uid, renderer))
        else:
            out.append(gen_utterance(spec, base, rng, uid, renderer))
        i += 1
    return out


# -- file format -------------------------------------------------------------

def _record(u: Utterance) -> str:
    T, F = u.features.shape
    return json.dumps({
        "id": u.id, "T": T, "F": F, "features": u.features.ravel().tolist(),
        "words": list(u.words), "starts_ms": [int(x) for x in u.starts_ms],
        "durations_ms": [int(x) for x in u.durations_ms],
    })


def write_corpus(path, utterances) -> None:
    atomic_write_text(path, "".join(_record(u) + "\n" for u in utterances))


def _field(rec: dict, name: str, lineno: int, kind, is_list: bool = False):
    if name not in rec:
        raise CorpusFormatError(f"line {lineno}: missing field {name!r}")
    value = rec[name]
    if is_list:
        ok = isinstance(value, list) and all(isinstance(x, kind) and not isinstance(x, bool) for x in value)
    else:
        ok = isinstance(value, kind) and not isinstance(value, bool)
    if not ok:
        raise CorpusFormatError(f"line {lineno}: field {name!r} has the wrong type")
    return value


def parse_record(line: str, lineno: int) -> Utterance:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"line {lineno}: not a complete JSON record ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise CorpusFormatError(f"line {lineno}: record must be an object")
    uid = _field(rec, "id", lineno, str)
    T = _field(rec, "T", lineno, int)
    F = _field(rec, "F", lineno, int)
    feats = _field(rec, "features", lineno, (int, float), True)
    if len(feats) != T * F:
        raise CorpusFormatError(f"line {lineno}: field 'features' holds {len(feats)} values, expected T*F={T * F}")
    words = _field(rec, "words", lineno, str, True)
    starts = _field(rec, "starts_ms", lineno, int, True)
    durs = _field(rec, "durations_ms", lineno, int, True)
    if not len(words) == len(starts) == len(durs):
        raise CorpusFormatError(f"line {lineno}: field 'words' length disagrees with starts_ms/durations_ms")
    return Utterance(uid, np.array(feats, dtype=np.float64).reshape(T, F), words, starts, durs)


def read_corpus(path) -> list[Utterance]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                out.append(parse_record(line, lineno))
    return out
