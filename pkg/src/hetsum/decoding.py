"""Sentence selection from scores: top-k and trigram blocking."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Selection:
    sentence_indices: tuple  # ascending document order
    scores: tuple


def _ranked(scores: Sequence[float]) -> list:
    # descending score, ties to the smaller index
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def select_topk(scores: Sequence[float], k: int) -> Selection:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = [float(x) for x in np.asarray(scores, dtype=float).reshape(-1)]
    chosen = sorted(_ranked(scores)[:k])
    return Selection(tuple(chosen), tuple(scores))


def trigrams(tokens: Sequence[str]) -> set:
    return {tuple(tokens[i:i + 3]) for i in range(len(tokens) - 2)}


def trigram_blocking(scores: Sequence[float], sentences: Sequence[Sequence[str]], k: int) -> Selection:
    """Accept sentences by descending score unless they repeat an accepted trigram."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = [float(x) for x in np.asarray(scores, dtype=float).reshape(-1)]
    if len(scores) != len(sentences):
        raise ValueError(f"{len(scores)} scores for {len(sentences)} sentences")
    seen: set = set()
    chosen = []
    for i in _ranked(scores):
        if len(chosen) >= k:
            break
        tri = trigrams(sentences[i])
        if tri & seen:
            continue
        chosen.append(i)
        seen |= tri
    return Selection(tuple(sorted(chosen)), tuple(scores))


def decode(scores, sentences, k: int, use_tri_blocking: bool) -> Selection:
    if use_tri_blocking:
        return trigram_blocking(scores, sentences, k)
    return select_topk(scores, k)
