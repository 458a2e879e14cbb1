"""ROUGE-1/2/L on pre-tokenized text and greedy oracle labeling.

Texts are either a flat token list (one sentence) or a list of token lists.
N-grams never cross sentence boundaries. No stemming or stopword removal.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .text import Example


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float
    variant: str = "R1"

    @classmethod
    def from_counts(cls, overlap: float, cand_total: float, ref_total: float, variant: str) -> "RougeScore":
        p = overlap / cand_total if cand_total > 0 else 0.0
        r = overlap / ref_total if ref_total > 0 else 0.0
        f = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f, variant)


ZERO = RougeScore(0.0, 0.0, 0.0)


def _as_sentences(text) -> list:
    if not text:
        return []
    if isinstance(text[0], str):
        return [list(text)]
    return [list(s) for s in text]


def ngrams(sentences, n: int) -> Counter:
    counts: Counter = Counter()
    for sent in _as_sentences(sentences):
        for i in range(len(sent) - n + 1):
            counts[tuple(sent[i:i + n])] += 1
    return counts


def rouge_n(candidate, reference, n: int = 1) -> RougeScore:
    if n not in (1, 2):
        raise ValueError(f"rouge_n supports n in {{1, 2}}, got {n}")
    ref = ngrams(reference, n)
    if not ref:
        return RougeScore(0.0, 0.0, 0.0, f"R{n}")
    cand = ngrams(candidate, n)
    overlap = sum((cand & ref).values())
    return RougeScore.from_counts(overlap, sum(cand.values()), sum(ref.values()), f"R{n}")


def _lcs_table(a: Sequence, b: Sequence) -> list:
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i, x in enumerate(a, 1):
        row, prev = table[i], table[i - 1]
        for j, y in enumerate(b, 1):
            row[j] = prev[j - 1] + 1 if x == y else max(prev[j], row[j - 1])
    return table


def lcs_positions(a: Sequence, b: Sequence) -> set:
    """Indices into ``a`` of one longest common subsequence with ``b``."""
    table = _lcs_table(a, b)
    i, j, hits = len(a), len(b), set()
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1]:
            hits.add(i - 1)
            i -= 1
            j -= 1
        elif table[i - 1][j] >= table[i][j - 1]:
            i -= 1
        else:
            j -= 1
    return hits


def lcs_length(a: Sequence, b: Sequence) -> int:
    return _lcs_table(a, b)[len(a)][len(b)]


def rouge_l(candidate, reference) -> RougeScore:
    """Summary-level ROUGE-L with union LCS per reference sentence.

    Each reference sentence's union-LCS hits are clipped by the remaining
    token counts on both sides so no token is credited twice.
    """
    refs = _as_sentences(reference)
    cands = _as_sentences(candidate)
    ref_total = sum(len(r) for r in refs)
    if ref_total == 0:
        return RougeScore(0.0, 0.0, 0.0, "RL")
    cand_total = sum(len(c) for c in cands)
    ref_left = Counter(t for r in refs for t in r)
    cand_left = Counter(t for c in cands for t in c)
    hits = 0
    for r in refs:
        union = set()
        for c in cands:
            union |= lcs_positions(r, c)
        for pos in sorted(union):
            tok = r[pos]
            if ref_left[tok] > 0 and cand_left[tok] > 0:
                hits += 1
                ref_left[tok] -= 1
                cand_left[tok] -= 1
    return RougeScore.from_counts(hits, cand_total, ref_total, "RL")


def rouge_all(candidate, reference) -> dict:
    return {"R1": rouge_n(candidate, reference, 1), "R2": rouge_n(candidate, reference, 2),
            "RL": rouge_l(candidate, reference)}


def truncate_to_length(sentences, length: int) -> list:
    out, used = [], 0
    for sent in _as_sentences(sentences):
        if used >= length:
            break
        take = list(sent[:length - used])
        out.append(take)
        used += len(take)
    return out


def limited_length_recall(selected, reference) -> tuple:
    """Recall of (R1, R2) after truncating ``selected`` to the reference token length."""
    ref_len = sum(len(r) for r in _as_sentences(reference))
    cut = truncate_to_length(selected, ref_len)
    return rouge_n(cut, reference, 1), rouge_n(cut, reference, 2)


def oracle_objective(selected, reference) -> float:
    return 0.5 * (rouge_n(selected, reference, 1).f1 + rouge_n(selected, reference, 2).f1)


def greedy_selection(example: Example, max_select: int = 3, objective=oracle_objective) -> tuple:
    """Greedy selection order and the selection score after each step."""
    selected: list = []
    trace: list = []
    if not example.reference_summary or example.n == 0:
        return selected, trace
    best = 0.0
    while len(selected) < max_select:
        cand_best, cand_idx = best, -1
        for i in range(example.n):
            if i in selected:
                continue
            chosen = [example.sentences[j] for j in sorted(selected + [i])]
            score = objective(chosen, example.reference_summary)
            if score > cand_best:
                cand_best, cand_idx = score, i
        if cand_idx < 0:
            break
        selected.append(cand_idx)
        best = cand_best
        trace.append(best)
    return selected, trace


def greedy_oracle(example: Example, max_select: int = 3, objective=oracle_objective) -> list:
    """0/1 labels from greedy maximisation of mean(R1 F1, R2 F1).

    Adds the best-gaining sentence (ties: smaller index) until no sentence
    improves the score or ``max_select`` sentences are chosen.
    """
    selected, _ = greedy_selection(example, max_select, objective)
    labels = [0] * example.n
    for i in selected:
        labels[i] = 1
    return labels
