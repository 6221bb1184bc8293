"""Glue between the modules: model set-up, corpus-level decoding, alignment and scoring."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._io import atomic_write_text
from .corpus import Utterance, is_entity
from .decoder import DecoderConfig, decode, forced_align
from .lm import BigramLM, UniformLM
from .metrics import aggregate_neer, aggregate_wer, neer, segmentation_mae, wer
from .model import EncoderParams, HeadConfig, encode
from .scoring import EmbeddingMatrix


def init_params(feat_dim: int, dim: int, num_hyps: int, corpus: list[Utterance], hidden=(64, 64), context: int = 2,
                duration_init: float | None = None, seed: int = 1, heads: HeadConfig = HeadConfig()) -> EncoderParams:
    """Fresh encoder; untrained durations default to the corpus mean word duration."""
    if duration_init is None:
        durs = [d for u in corpus for d in u.durations]
        duration_init = float(np.mean(durs)) if durs else 0.5 * heads.duration_scale
    return EncoderParams.init(feat_dim, dim, num_hyps, tuple(hidden), context, np.random.default_rng(seed),
                              duration_init, heads)


def make_lm(kind: str, vocab: EmbeddingMatrix, transcripts=None, smoothing: float = 0.5):
    if kind == "none":
        return None
    if kind == "uniform":
        return UniformLM(len(vocab))
    if kind == "bigram":
        seqs = [[vocab.index(w) + 1 for w in words] for words in (transcripts or [])]
        return BigramLM.fit(seqs, len(vocab), smoothing)
    raise ValueError(f"unknown language model {kind!r}")


@dataclass
class WordRecord:
    """Decoded or aligned words of one utterance in file form."""

    id: str
    words: list[str]
    starts_ms: list[float]
    durations_ms: list[float]
    offsets_ms: list[float]  # start minus the emitting frame's time
    score: float
    flagged: bool = False

    def to_json(self) -> str:
        d = self.__dict__.copy()
        d["score"] = d["score"] if math.isfinite(d["score"]) else None
        return json.dumps(d)

    @classmethod
    def from_json(cls, line: str) -> "WordRecord":
        d = json.loads(line)
        d["score"] = -math.inf if d["score"] is None else d["score"]
        return cls(**d)


def _record(uid, words, stamps, score, flagged, frame_period) -> WordRecord:
    return WordRecord(uid, list(words), [s.start * 1000 for s in stamps], [s.duration * 1000 for s in stamps],
                      [(s.start - s.frame * frame_period) * 1000 for s in stamps], score, flagged)


def decode_utterance(params, utt: Utterance, vocab, cfg: DecoderConfig, heads: HeadConfig = HeadConfig(), lm=None):
    return decode(encode(params, utt.features, heads), vocab, lm, cfg)


def decode_record(params, utt, vocab, cfg, heads=HeadConfig(), lm=None):
    res = decode_utterance(params, utt, vocab, cfg, heads, lm)
    h = res.best
    return _record(utt.id, h.words, h.stamps, h.total, False, heads.frame_period), res


def align_record(params, utt, vocab, cfg, heads=HeadConfig(), lm=None) -> WordRecord:
    a = forced_align(encode(params, utt.features, heads), vocab, utt.label_sequence(vocab), cfg, lm)
    return _record(utt.id, a.words, a.stamps, a.score, a.flagged, heads.frame_period)


def heldout_wer_fn(vocab, cfg: DecoderConfig, heads: HeadConfig = HeadConfig(), lm=None):
    def fn(params, utts):
        return aggregate_wer([wer(u.words, list(decode_utterance(params, u, vocab, cfg, heads, lm).best.words))
                              for u in utts])
    return fn


def write_records(path, records) -> None:
    atomic_write_text(path, "".join(r.to_json() + "\n" for r in records))


def read_records(path) -> list[WordRecord]:
    with open(path) as fh:
        return [WordRecord.from_json(line) for line in fh if line.strip()]


UTT_COLUMNS = ["id", "ref_len", "hyp_len", "errors", "wer", "flagged", "entity_len", "entity_errors",
               "mu_alpha", "mu_beta"]
SUMMARY_COLUMNS = ["utterances", "ref_words", "errors", "wer", "neer", "aligned_words", "mu_alpha", "mu_beta",
                   "flagged"]


def evaluate(refs: list[Utterance], hyps: list[WordRecord]) -> tuple[list[dict], dict]:
    """Per-utterance rows and the aggregate row; utterances without a hypothesis are skipped."""
    by_id = {h.id: h for h in hyps}
    rows, wers, neers = [], [], []
    start_err, dur_err = [], []
    n_flagged = 0
    for u in refs:
        h = by_id.get(u.id)
        if h is None:
            continue
        w = wer(u.words, h.words)
        ne = neer(u.words, h.words, [is_entity(x) for x in u.words])
        wers.append(w)
        neers.append(ne)
        row = {"id": u.id, "ref_len": w.ref_len, "hyp_len": len(h.words), "errors": w.errors, "wer": f"{w.rate:.6f}",
               "flagged": int(w.flagged or h.flagged), "entity_len": ne.entity_len if ne else 0,
               "entity_errors": ne.errors if ne else "", "mu_alpha": "", "mu_beta": ""}
        n_flagged += row["flagged"]
        if list(h.words) == list(u.words) and len(h.starts_ms) == len(u.words) and u.words:
            ma, mb = segmentation_mae(list(zip(h.starts_ms, h.durations_ms)), list(zip(u.starts_ms, u.durations_ms)))
            row["mu_alpha"], row["mu_beta"] = f"{ma:.3f}", f"{mb:.3f}"
            start_err += [abs(a - b) for a, b in zip(h.starts_ms, u.starts_ms)]
            dur_err += [abs(a - b) for a, b in zip(h.durations_ms, u.durations_ms)]
        rows.append(row)

    def fmt(x):
        return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"

    summary = {"utterances": len(rows), "ref_words": sum(w.ref_len for w in wers),
               "errors": sum(w.errors for w in wers), "wer": fmt(aggregate_wer(wers)),
               "neer": fmt(aggregate_neer(neers)), "aligned_words": len(start_err),
               "mu_alpha": fmt(float(np.mean(start_err)) if start_err else None),
               "mu_beta": fmt(float(np.mean(dur_err)) if dur_err else None), "flagged": n_flagged}
    return rows, summary
