"""Prefix beam search over embedding-matching scores.

Every frame is scored against the whole vocabulary with summed squared
distances, the blank magnitude is divided by ``blank_divisor`` and the
result goes through a log-softmax. Prefixes keep separate blank-ending and
word-ending masses, so a label beam of one is the only merging scheme.

A word's timestamp is read from the frame that first emitted it on the
dominant path into the prefix. When two paths merge into one prefix, the
timestamps of the heavier one are kept; on a tie the older (carried-over)
path wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import is_entity
from .ctc import BLANK, NEG_INF, FrameArrays, LabelSequence
from .lm import LanguageModel
from .scoring import EmbeddingMatrix, log_softmax, sq_dists


def _lae(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    return max(a, b) + math.log1p(math.exp(-abs(a - b)))


@dataclass(frozen=True)
class DecoderConfig:
    """Beam widths of ``None`` are unbounded; ``overlap_tolerance`` may be ``math.inf``."""

    input_beam: int | None = 10
    label_beam: int = 1
    word_beam: int | None = 10
    lm_weight: float = 0.0
    class_weight: float = 0.0
    blank_divisor: float = 1.0
    overlap_tolerance: float = 0.2

    def __post_init__(self):
        for name in ("input_beam", "word_beam"):
            v = getattr(self, name)
            if v is not None and (int(v) != v or v < 1):
                raise ValueError(f"{name} must be a count >= 1 or None, got {v!r}")
        if self.label_beam != 1:
            raise ValueError("only label_beam=1 merging is implemented")
        if not self.blank_divisor > 0:
            raise ValueError("blank_divisor must be positive")
        if not self.overlap_tolerance >= 0:
            raise ValueError("overlap_tolerance must be non-negative")

    def widened(self) -> "DecoderConfig":
        return DecoderConfig(None, 1, None, self.lm_weight, self.class_weight, self.blank_divisor, math.inf)


@dataclass(frozen=True)
class WordStamp:
    label: int  # 1-based
    start: float
    duration: float
    frame: int
    acoustic: float  # log posterior of the word at its emitting frame
    lm: float
    entity: bool = False

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class Hypothesis:
    labels: tuple[int, ...]
    words: tuple[str, ...]
    stamps: tuple[WordStamp, ...]
    acoustic: float  # log of the summed path mass
    lm: float
    entities: int
    total: float

    @property
    def last_frame(self) -> int:
        return self.stamps[-1].frame if self.stamps else -1

    @property
    def starts(self) -> list[float]:
        return [s.start for s in self.stamps]

    @property
    def durations(self) -> list[float]:
        return [s.duration for s in self.stamps]


def overlap_gate(prev_end: float, next_start: float, gamma: float) -> bool:
    """False when the previous word ends more than ``gamma`` after the next one starts."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return not prev_end > next_start + gamma


# -- frame scoring -----------------------------------------------------------

def _as_arrays(frames) -> FrameArrays:
    return frames if isinstance(frames, FrameArrays) else FrameArrays.from_frames(frames)


@dataclass
class _Grid:
    logp: np.ndarray  # (T, n+1)
    stamps: np.ndarray  # (T, n, 2) timestamp of the best-matching hypothesis per word

    @classmethod
    def build(cls, out: FrameArrays, vocab: EmbeddingMatrix, blank_divisor: float) -> "_Grid":
        if out.embeddings.shape[-1] != vocab.dim:
            raise ValueError(f"embedding length {out.embeddings.shape[-1]} does not match vocabulary dim {vocab.dim}")
        per_k = -sq_dists(out.embeddings, vocab.vectors)  # (T, L, n)
        scores = np.concatenate([-(out.blank_s**2)[:, None] / blank_divisor, per_k.sum(axis=1)], axis=1)
        best = np.argmax(per_k, axis=1)  # ties -> lowest k
        stamps = np.take_along_axis(out.timestamps, best[..., None], axis=1)
        return cls(log_softmax(scores, axis=1), stamps)


def extract_timestamps(alignment: Sequence[int], frames, vocab: EmbeddingMatrix | None = None) -> list[WordStamp]:
    """Word timestamps from a frame-level label path (0 is blank, words are 1-based).

    Each word is stamped from the first frame of its run. With several
    hypotheses per frame the one closest to the word's embedding is used,
    which needs ``vocab``; without it the first hypothesis is read.
    """
    out = _as_arrays(frames)
    if len(alignment) != len(out):
        raise ValueError("alignment and frames differ in length")
    if vocab is not None:
        grid = _Grid.build(out, vocab, 1.0)
        logp = grid.logp
    result = []
    prev = BLANK
    for t, lab in enumerate(alignment):
        lab = int(lab)
        if lab != BLANK and lab != prev:
            if vocab is not None:
                tau, theta = grid.stamps[t, lab - 1]
                ac = float(logp[t, lab])
            else:
                tau, theta = out.timestamps[t, 0]
                ac = math.nan
            result.append(WordStamp(lab, float(tau), float(theta), t, ac, 0.0))
        prev = lab
    return result


# -- search ------------------------------------------------------------------

@dataclass
class _State:
    lb: float
    lnb: float
    stamps: tuple[WordStamp, ...]
    lm: float
    ent: int


@dataclass
class _Next:
    lm: float
    ent: int
    carry_lb: float = NEG_INF
    carry_lnb: float = NEG_INF
    carry_stamps: tuple | None = None
    emit_lnb: float = NEG_INF
    emit_stamps: tuple | None = None

    def settle(self) -> _State:
        lnb = _lae(self.carry_lnb, self.emit_lnb)
        carry = _lae(self.carry_lb, self.carry_lnb)
        if self.carry_stamps is None or (self.emit_stamps is not None and self.emit_lnb > carry):
            stamps = self.emit_stamps
        else:
            stamps = self.carry_stamps
        return _State(self.carry_lb, lnb, stamps, self.lm, self.ent)


def _rank_key(item, cfg: DecoderConfig):
    labels, st = item
    total = _lae(st.lb, st.lnb) + cfg.lm_weight * st.lm + cfg.class_weight * st.ent
    return (-total, labels, tuple(s.frame for s in st.stamps))


def _search(grid: _Grid, cfg: DecoderConfig, lm: LanguageModel | None, entity_labels: frozenset,
            refs: tuple[int, ...] | None) -> list[tuple[tuple[int, ...], _State]]:
    T, n1 = grid.logp.shape
    n = n1 - 1
    ib = n if cfg.input_beam is None else min(cfg.input_beam, n)
    order = np.argsort(-grid.logp[:, 1:], axis=1, kind="stable")[:, :ib] + 1
    gamma = cfg.overlap_tolerance
    beam: list[tuple[tuple[int, ...], _State]] = [((), _State(0.0, NEG_INF, (), 0.0, 0))]
    for t in range(T):
        lp = grid.logp[t]
        cands = [int(c) for c in order[t]]
        nxt: dict[tuple[int, ...], _Next] = {}
        for labels, st in beam:
            tot = _lae(st.lb, st.lnb)
            last = labels[-1] if labels else None
            slot = nxt.get(labels)
            if slot is None:
                slot = nxt[labels] = _Next(st.lm, st.ent)
            slot.carry_stamps = st.stamps
            slot.carry_lb = _lae(slot.carry_lb, tot + lp[BLANK])
            if last is not None:
                slot.carry_lnb = _lae(slot.carry_lnb, st.lnb + lp[last])
            allowed = cands
            if refs is not None:
                j = len(labels)
                allowed = [refs[j]] if j < len(refs) and refs[j] in cands else []
            for c in allowed:
                base = st.lb if c == last else tot
                if base == NEG_INF:
                    continue
                tau, theta = grid.stamps[t, c - 1]
                if st.stamps and not overlap_gate(st.stamps[-1].end, float(tau), gamma):
                    continue
                new = labels + (c,)
                lm_lp = lm.logprob(labels, c) if lm is not None else 0.0
                word = WordStamp(c, float(tau), float(theta), t, float(lp[c]), float(lm_lp), c in entity_labels)
                slot_new = nxt.get(new)
                if slot_new is None:
                    slot_new = nxt[new] = _Next(st.lm + lm_lp, st.ent + (c in entity_labels))
                slot_new.emit_lnb = base + lp[c]
                slot_new.emit_stamps = st.stamps + (word,)
        items = [(labels, s.settle()) for labels, s in nxt.items()]
        items = [it for it in items if _lae(it[1].lb, it[1].lnb) > NEG_INF]
        items.sort(key=lambda it: _rank_key(it, cfg))
        beam = items if cfg.word_beam is None else items[:cfg.word_beam]
    return beam


def _hypothesis(labels, st: _State, vocab: EmbeddingMatrix, cfg: DecoderConfig) -> Hypothesis:
    ac = _lae(st.lb, st.lnb)
    total = ac + cfg.lm_weight * st.lm + cfg.class_weight * st.ent
    return Hypothesis(tuple(labels), tuple(vocab.word_ids[i - 1] for i in labels), st.stamps, ac, st.lm, st.ent, total)


def _entity_labels(vocab: EmbeddingMatrix, entities) -> frozenset:
    if entities is None:
        return frozenset(i + 1 for i, w in enumerate(vocab.word_ids) if is_entity(w))
    return frozenset(entities)


@dataclass
class DecodeResult:
    hypotheses: list[Hypothesis]
    lattice: "Lattice"

    @property
    def best(self) -> Hypothesis | None:
        return self.hypotheses[0] if self.hypotheses else None


def decode(frames, vocab: EmbeddingMatrix, lm: LanguageModel | None = None, cfg: DecoderConfig = DecoderConfig(),
           entities=None) -> DecodeResult:
    """Ranked hypotheses and their prefix tree as a lattice.

    ``entities`` holds the 1-based labels that earn ``class_weight``; by
    default every word whose id marks it as an entity.
    """
    if len(vocab) == 0:
        raise ValueError("vocabulary is empty")
    if len(frames) == 0:
        empty = Hypothesis((), (), (), 0.0, 0.0, 0, 0.0)
        return DecodeResult([empty], build_lattice([empty], cfg))
    grid = _Grid.build(_as_arrays(frames), vocab, cfg.blank_divisor)
    beam = _search(grid, cfg, lm, _entity_labels(vocab, entities), None)
    hyps = [_hypothesis(lab, st, vocab, cfg) for lab, st in beam]
    return DecodeResult(hyps, build_lattice(hyps, cfg))


@dataclass
class AlignResult:
    words: tuple[str, ...]
    stamps: tuple[WordStamp, ...]
    score: float
    flagged: bool
    widened: bool = False

    @property
    def starts(self) -> list[float]:
        return [s.start for s in self.stamps]

    @property
    def durations(self) -> list[float]:
        return [s.duration for s in self.stamps]


def forced_align(frames, vocab: EmbeddingMatrix, refs: LabelSequence | Sequence[int],
                 cfg: DecoderConfig = DecoderConfig(), lm: LanguageModel | None = None, entities=None) -> AlignResult:
    """Decode restricted to prefixes of ``refs``.

    If the beams lose every path, the search is repeated once with unbounded
    beams and no overlap gate. A second failure is flagged with score -inf.
    """
    labels = tuple(refs.labels if isinstance(refs, LabelSequence) else refs)
    if not labels:
        raise ValueError("forced alignment needs at least one reference word")
    if any(not 1 <= lab <= len(vocab) for lab in labels):
        raise ValueError("reference labels must be 1-based vocabulary indices")
    words = tuple(vocab.word_ids[i - 1] for i in labels)
    if len(frames) == 0:
        return AlignResult(words, (), NEG_INF, True)
    out = _as_arrays(frames)
    ents = _entity_labels(vocab, entities)
    for attempt, c in enumerate((cfg, cfg.widened())):
        grid = _Grid.build(out, vocab, c.blank_divisor)
        for lab, st in _search(grid, c, lm, ents, labels):
            if lab == labels:
                h = _hypothesis(lab, st, vocab, c)
                return AlignResult(words, h.stamps, h.total, False, attempt > 0)
    return AlignResult(words, (), NEG_INF, True, True)


# -- lattices ----------------------------------------------------------------

def _ms(seconds: float) -> int:
    return int(round(seconds * 1000.0))


@dataclass(frozen=True)
class Arc:
    src: int
    dst: int
    word: str
    start_ms: int
    end_ms: int
    acoustic: float
    lm: float
    bonus: float = 0.0  # entity indicator


@dataclass
class Lattice:
    """Acyclic word graph; node ids are in topological order and node 0 is the start.

    A path's total score is the sum of its arc weights plus the final weight
    of the node it ends in.
    """

    node_times: list[int] = field(default_factory=lambda: [0])
    finals: dict[int, float] = field(default_factory=dict)
    arcs: list[Arc] = field(default_factory=list)
    lm_weight: float = 0.0
    class_weight: float = 0.0

    def weight(self, arc: Arc) -> float:
        return arc.acoustic + self.lm_weight * arc.lm + self.class_weight * arc.bonus

    def add_node(self, time_ms: int) -> int:
        self.node_times.append(time_ms)
        return len(self.node_times) - 1

    def arc_posteriors(self) -> list[float]:
        """Forward-backward arc posteriors under the path scores."""
        if not self.arcs or not self.finals:
            return [0.0] * len(self.arcs)
        N = len(self.node_times)
        out_arcs: list[list[int]] = [[] for _ in range(N)]
        for i, a in enumerate(self.arcs):
            if a.dst <= a.src:
                raise ValueError("lattice arcs must go from lower to higher node ids")
            out_arcs[a.src].append(i)
        fwd = [NEG_INF] * N
        fwd[0] = 0.0
        for v in range(N):
            for i in out_arcs[v]:
                a = self.arcs[i]
                fwd[a.dst] = _lae(fwd[a.dst], fwd[v] + self.weight(a))
        bwd = [NEG_INF] * N
        for v in range(N - 1, -1, -1):
            acc = self.finals.get(v, NEG_INF)
            for i in out_arcs[v]:
                a = self.arcs[i]
                acc = _lae(acc, self.weight(a) + bwd[a.dst])
            bwd[v] = acc
        z = bwd[0]
        return [math.exp(fwd[a.src] + self.weight(a) + bwd[a.dst] - z) if z > NEG_INF else 0.0 for a in self.arcs]

    def reachability(self) -> list[set[int]]:
        N = len(self.node_times)
        succ: list[set[int]] = [set() for _ in range(N)]
        for a in sorted(self.arcs, key=lambda a: -a.src):
            succ[a.src] |= {a.dst} | succ[a.dst]
        return succ


def build_lattice(hyps: Sequence[Hypothesis], cfg: DecoderConfig = DecoderConfig()) -> Lattice:
    """Prefix tree of ``hyps``; an arc takes the timestamps of the best-ranked hypothesis through it."""
    lat = Lattice(lm_weight=cfg.lm_weight, class_weight=cfg.class_weight)
    nodes: dict[tuple[int, ...], int] = {(): 0}
    into: dict[int, Arc] = {}
    for h in hyps:
        path = 0.0
        for j, st in enumerate(h.stamps):
            key = h.labels[:j + 1]
            node = nodes.get(key)
            if node is None:
                node = nodes[key] = lat.add_node(_ms(st.end))
                into[node] = Arc(nodes[h.labels[:j]], node, h.words[j], _ms(st.start), _ms(st.end),
                                 st.acoustic, st.lm, float(st.entity))
                lat.arcs.append(into[node])
            path += lat.weight(into[node])
        lat.finals[nodes[h.labels]] = h.total - path
    return lat


def _fmt(x: float) -> str:
    s = f"{x:.4f}"
    return "0.0000" if s == "-0.0000" else s


def emit_lattice_text(lat: Lattice) -> str:
    arcs = sorted(lat.arcs, key=lambda a: (a.start_ms, a.word, a.end_ms, -a.acoustic, a.src, a.dst))
    return "".join(f"{a.word}:{a.start_ms}-{a.end_ms} {_fmt(a.acoustic)},{_fmt(a.lm)}\n" for a in arcs)


def parse_lattice_text(text: str) -> list[tuple[str, int, int, float, float]]:
    """(word, start_ms, end_ms, acoustic, lm) per line."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            head, scores = line.split(" ")
            word, span = head.rsplit(":", 1)
            start, end = span.split("-")
            ac, lm = scores.split(",")
            out.append((word, int(start), int(end), float(ac), float(lm)))
        except ValueError:
            raise ValueError(f"line {lineno}: not a lattice arc: {line!r}") from None
    return out


# -- confusion networks -------------------------------------------------------

EPSILON = "<eps>"


@dataclass(frozen=True)
class CNEntry:
    word: str
    posterior: float
    start_ms: int
    end_ms: int


@dataclass
class ConfusionNetwork:
    bins: list[list[CNEntry]]

    def best_words(self) -> list[str]:
        out = []
        for b in self.bins:
            top = max(b, key=lambda e: (e.posterior, e.word != EPSILON))
            if top.word != EPSILON:
                out.append(top.word)
        return out


def _overlaps(a: Arc, b: Arc) -> bool:
    inter = min(a.end_ms, b.end_ms) - max(a.start_ms, b.start_ms)
    shorter = min(a.end_ms - a.start_ms, b.end_ms - b.start_ms)
    if shorter <= 0:
        return inter >= 0
    return inter >= 0.5 * shorter


def lattice_to_cn(lat: Lattice) -> ConfusionNetwork:
    """Greedy interval clustering of lattice arcs into posterior-weighted bins.

    An arc joins the first bin holding an arc it overlaps by at least half of
    the shorter interval, provided no arc already in that bin lies on a
    common path with it. Words repeated within a bin are merged, and any
    missing posterior mass becomes an epsilon entry.
    """
    post = lat.arc_posteriors()
    reach = lat.reachability()

    def same_path(a: Arc, b: Arc) -> bool:
        return a.src == b.src and a.dst == b.dst or b.src in reach[a.dst] | {a.dst} or a.src in reach[b.dst] | {b.dst}

    order = sorted(range(len(lat.arcs)), key=lambda i: (lat.arcs[i].start_ms, -post[i], lat.arcs[i].word, i))
    bins: list[list[int]] = []
    for i in order:
        a = lat.arcs[i]
        for members in bins:
            if any(same_path(a, lat.arcs[j]) for j in members):
                continue
            if any(_overlaps(a, lat.arcs[j]) for j in members):
                members.append(i)
                break
        else:
            bins.append([i])

    result = []
    for members in bins:
        merged: dict[str, list] = {}
        for j in members:
            a = lat.arcs[j]
            m = merged.setdefault(a.word, [0.0, a.start_ms, a.end_ms])
            m[0] += post[j]
            m[1], m[2] = min(m[1], a.start_ms), max(m[2], a.end_ms)
        total = sum(m[0] for m in merged.values())
        scale = 1.0 / total if total > 1.0 else 1.0
        entries = [CNEntry(w, m[0] * scale, m[1], m[2]) for w, m in sorted(merged.items())]
        rest = 1.0 - total * scale
        if rest > 1e-9:
            entries.append(CNEntry(EPSILON, rest, min(e.start_ms for e in entries), max(e.end_ms for e in entries)))
        mean_start = sum(lat.arcs[j].start_ms for j in members) / len(members)
        result.append((mean_start, len(result), entries))
    result.sort(key=lambda r: (r[0], r[1]))
    return ConfusionNetwork([r[2] for r in result])


def emit_cn_text(cn: ConfusionNetwork) -> str:
    return "".join(f"{b} {e.word} {e.posterior:.6f} {e.start_ms} {e.end_ms}\n"
                   for b, entries in enumerate(cn.bins) for e in entries)
