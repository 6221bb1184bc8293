"""Word error rate, entity error rate, segmentation error and histograms."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._io import atomic_write_text

OK, SUB, DEL, INS = "ok", "sub", "del", "ins"


@dataclass(frozen=True)
class WerResult:
    errors: int
    ref_len: int
    rate: float
    flagged: bool = False  # empty reference with a non-empty hypothesis
    subs: int = 0
    dels: int = 0
    ins: int = 0


def align_words(ref: Sequence, hyp: Sequence) -> list[tuple[str, int | None, int | None]]:
    """Minimum edit alignment as (op, ref index, hyp index) steps.

    Among equal-cost paths the backtrace prefers a diagonal step, then a
    deletion, then an insertion.
    """
    R, H = len(ref), len(hyp)
    cost = np.zeros((R + 1, H + 1), dtype=np.int64)
    cost[:, 0] = np.arange(R + 1)
    cost[0, :] = np.arange(H + 1)
    for i in range(1, R + 1):
        for j in range(1, H + 1):
            diag = cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            cost[i, j] = min(diag, cost[i - 1, j] + 1, cost[i, j - 1] + 1)
    ops = []
    i, j = R, H
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i, j] == cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            ops.append((OK if ref[i - 1] == hyp[j - 1] else SUB, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and cost[i, j] == cost[i - 1, j] + 1:
            ops.append((DEL, i - 1, None))
            i -= 1
        else:
            ops.append((INS, None, j - 1))
            j -= 1
    ops.reverse()
    return ops


def wer(ref: Sequence, hyp: Sequence) -> WerResult:
    ops = align_words(ref, hyp)
    subs = sum(op == SUB for op, _, _ in ops)
    dels = sum(op == DEL for op, _, _ in ops)
    ins = sum(op == INS for op, _, _ in ops)
    errors = subs + dels + ins
    if len(ref) == 0:
        # no words to normalise by: report the insertion count itself and flag it
        return WerResult(errors, 0, float(errors), errors > 0, subs, dels, ins)
    return WerResult(errors, len(ref), errors / len(ref), False, subs, dels, ins)


@dataclass(frozen=True)
class NeerResult:
    errors: int
    entity_len: int

    @property
    def rate(self) -> float:
        return self.errors / self.entity_len


def neer(ref: Sequence, hyp: Sequence, entity_mask: Sequence[bool]) -> NeerResult | None:
    """Errors inside entity regions of the global word alignment; None without entities.

    Substitutions and deletions count when they hit an entity token. An
    insertion counts when every reference neighbour it sits between is an
    entity.
    """
    if len(entity_mask) != len(ref):
        raise ValueError("entity_mask must have one flag per reference word")
    n_ent = int(sum(bool(m) for m in entity_mask))
    if n_ent == 0:
        return None
    errors = 0
    prev_ref: int | None = None
    ops = align_words(ref, hyp)
    for k, (op, i, _) in enumerate(ops):
        if op in (SUB, DEL) and entity_mask[i]:
            errors += 1
        elif op == INS:
            nxt = next((r for o, r, _ in ops[k + 1:] if r is not None), None)
            neighbours = [x for x in (prev_ref, nxt) if x is not None]
            if neighbours and all(entity_mask[x] for x in neighbours):
                errors += 1
        if i is not None:
            prev_ref = i
    return NeerResult(errors, n_ent)


def aggregate_wer(results: Sequence[WerResult]) -> float:
    n = sum(r.ref_len for r in results)
    return sum(r.errors for r in results) / n if n else math.nan


def aggregate_neer(results: Sequence[NeerResult | None]) -> float:
    kept = [r for r in results if r is not None]
    n = sum(r.entity_len for r in kept)
    return sum(r.errors for r in kept) / n if n else math.nan


def segmentation_mae(hyp: Sequence[tuple[float, float]], ref: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Mean absolute (start, duration) differences, in the units of the inputs (ms)."""
    if len(hyp) != len(ref):
        raise ValueError(f"hypothesis has {len(hyp)} words, reference {len(ref)}")
    if not ref:
        return math.nan, math.nan
    h = np.asarray(hyp, dtype=np.float64).reshape(-1, 2)
    r = np.asarray(ref, dtype=np.float64).reshape(-1, 2)
    err = np.abs(h - r).mean(axis=0)
    return float(err[0]), float(err[1])


def histogram(values: Sequence[float], bin_width: float) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width bins starting at the minimum; the last bin is closed."""
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    lo, hi = float(v.min()), float(v.max())
    nb = max(1, int(math.ceil((hi - lo) / bin_width)))
    edges = lo + bin_width * np.arange(nb + 1)
    edges[-1] = max(edges[-1], hi)
    counts, _ = np.histogram(v, bins=edges)
    return edges, counts


def format_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: row.get(k, "") for k in columns})
    return buf.getvalue()


def write_csv(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    atomic_write_text(path, format_csv(rows, columns))


def write_histogram_csv(path, edges: np.ndarray, counts: np.ndarray) -> None:
    rows = [{"bin_start": f"{a:.6g}", "bin_end": f"{b:.6g}", "count": int(c)}
            for a, b, c in zip(edges[:-1], edges[1:], counts)]
    write_csv(path, rows, ["bin_start", "bin_end", "count"])
