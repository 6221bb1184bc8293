"""Language models pluggable into the prefix decoder.

Words are 1-based vocabulary labels, as in score vectors. ``logprob``
returns the natural-log probability of ``word`` following ``context``.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Protocol, Sequence


class LanguageModel(Protocol):
    def logprob(self, context: Sequence[int], word: int) -> float: ...


class UniformLM:
    def __init__(self, n: int):
        if n < 1:
            raise ValueError("vocabulary must be non-empty")
        self.n = n
        self._lp = -math.log(n)

    def logprob(self, context, word) -> float:
        return self._lp


class BigramLM:
    """Add-k smoothed bigram model; context 0 stands for sentence start."""

    def __init__(self, n: int, k: float = 0.5):
        if n < 1 or k <= 0:
            raise ValueError("need a non-empty vocabulary and positive smoothing")
        self.n, self.k = n, k
        self.pairs: Counter = Counter()
        self.unigrams: Counter = Counter()

    @classmethod
    def fit(cls, transcripts: Iterable[Sequence[int]], n: int, k: float = 0.5) -> "BigramLM":
        lm = cls(n, k)
        for words in transcripts:
            prev = 0
            for w in words:
                lm.pairs[prev, w] += 1
                lm.unigrams[prev] += 1
                prev = w
        return lm

    def logprob(self, context, word) -> float:
        prev = context[-1] if len(context) else 0
        num = self.pairs[prev, word] + self.k
        den = self.unigrams[prev] + self.k * self.n
        return math.log(num / den)
