"""Templated desk-scale corpora with planted summary sentences.

Single-document layout (``n`` sentences of random pool words, each pool word
used once per document unless planted):

* a *key* word occurs twice in the lead sentence (far apart, so no convolution
  window sees both copies) and once in each of two other sentences;
* a *decoy* word occurs once in the lead sentence and once in each of two
  further sentences;
* a few *pair* words link two non-summary sentences, and one non-summary
  sentence repeats a word of its own.

The reference summary is the lead sentence plus the two sentences sharing the
key word. Telling them apart from the decoy sentences requires knowing which
lead-sentence word is repeated (edge TF) and which sentences reach that word
(a sentence-to-word-to-sentence hop).
"""
from __future__ import annotations

import itertools

import numpy as np

from .text import STOPWORDS, Example

_CONS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def word_pool(size: int, seed: int = 1234) -> list[str]:
    rng = np.random.default_rng(seed)
    syll = [c + v for c in _CONS for v in _VOWELS]
    words = sorted({"".join(p) for p in itertools.product(syll, repeat=2)} - STOPWORDS)
    idx = rng.choice(len(words), size=size, replace=False)
    return [words[i] for i in sorted(idx)]


def _sentence_lengths(rng, n, lo, hi):
    return [int(rng.integers(lo, hi + 1)) for _ in range(n)]


def planted_document(rng, pool, n=8, min_len=9, max_len=13, num_pairs=2):
    """Return (sentence token lists, planted indices)."""
    if n < 6:
        raise ValueError("planted documents need at least 6 sentences")
    lengths = _sentence_lengths(rng, n, min_len, max_len)
    others = [int(i) for i in rng.permutation(np.arange(1, n))]
    key_a, key_b, dec_a, dec_b, rep = others[0], others[1], others[2], others[3], others[4]
    planted = sorted([0, key_a, key_b])

    slots = [[None] * L for L in lengths]

    def free(j):
        return [p for p, tok in enumerate(slots[j]) if tok is None]

    def put(j, word, pos=None):
        cands = free(j)
        p = pos if pos is not None else cands[int(rng.integers(len(cands)))]
        slots[j][p] = word

    budget = sum(lengths)
    words = iter(rng.choice(len(pool), size=budget, replace=False).tolist())
    key, decoy, repeated = pool[next(words)], pool[next(words)], pool[next(words)]

    put(0, key, 1)
    put(0, key, lengths[0] - 2)
    put(key_a, key)
    put(key_b, key)
    put(0, decoy)
    put(dec_a, decoy)
    put(dec_b, decoy)
    put(rep, repeated, 0)
    put(rep, repeated, lengths[rep] - 1)
    non_summary = [j for j in range(n) if j not in planted]
    for _ in range(num_pairs):
        a, b = rng.choice(non_summary, size=2, replace=False)
        link = pool[next(words)]
        put(int(a), link)
        put(int(b), link)
    for j in range(n):
        for p in free(j):
            slots[j][p] = pool[next(words)]
    return slots, planted


def planted_example(rng, pool, **kw) -> Example:
    sents, planted = planted_document(rng, pool, **kw)
    labels = [1 if j in planted else 0 for j in range(len(sents))]
    return Example(sents, [sents[j] for j in planted], labels)


def make_corpus(num_examples: int, seed: int = 0, pool_size: int = 240, **kw) -> list:
    """Single-document planted corpus; labels mark the planted sentences."""
    pool = word_pool(pool_size)
    rng = np.random.default_rng(seed)
    return [planted_example(rng, pool, **kw) for _ in range(num_examples)]


def make_multidoc_corpus(num_examples: int, seed: int = 0, pool_size: int = 240,
                         docs=(2, 4), sentences_per_doc=(3, 5), min_len=6, max_len=10) -> list:
    """Multi-document clusters; the summary is each source's sentence holding the cluster key word."""
    pool = word_pool(pool_size)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(num_examples):
        l = int(rng.integers(docs[0], docs[1] + 1))
        sizes = [int(rng.integers(sentences_per_doc[0], sentences_per_doc[1] + 1)) for _ in range(l)]
        lengths = [_sentence_lengths(rng, s, min_len, max_len) for s in sizes]
        total = sum(sum(x) for x in lengths)
        words = iter(rng.choice(len(pool), size=total, replace=False).tolist())
        key = pool[next(words)]
        sentences, bounds, labels = [], [], []
        for d in range(l):
            start = len(sentences)
            hit = int(rng.integers(sizes[d]))
            for j, L in enumerate(lengths[d]):
                toks = [None] * L
                if j == hit:
                    toks[int(rng.integers(L))] = key
                toks = [t if t is not None else pool[next(words)] for t in toks]
                sentences.append(toks)
                labels.append(1 if j == hit else 0)
            bounds.append((start, len(sentences)))
        summary = [s for s, y in zip(sentences, labels) if y]
        out.append(Example(sentences, summary, labels, bounds))
    return out


def random_corpus(num_examples: int, seed: int = 0, pool_size: int = 2000, sentences=(5, 50),
                  length=(5, 25), exponent: float = 1.1, docs=None, stopword_rate: float = 0.0) -> list:
    """Unlabeled documents of Zipf-distributed pool words.

    ``docs=(lo, hi)`` splits each example into that many source documents.
    ``stopword_rate`` mixes in stopwords so some sentences lose all node words.
    """
    pool = word_pool(pool_size)
    probs = 1.0 / np.arange(1, pool_size + 1) ** exponent
    probs /= probs.sum()
    stop = sorted(STOPWORDS)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(num_examples):
        n = int(rng.integers(sentences[0], sentences[1] + 1))
        sents = []
        for _ in range(n):
            L = int(rng.integers(length[0], length[1] + 1))
            toks = [pool[i] for i in rng.choice(pool_size, size=L, p=probs)]
            if stopword_rate:
                toks = [stop[int(rng.integers(len(stop)))] if rng.random() < stopword_rate else t for t in toks]
            sents.append(toks)
        bounds = [(0, n)]
        if docs is not None:
            l = min(n, int(rng.integers(docs[0], docs[1] + 1)))
            cuts = sorted(rng.choice(np.arange(1, n), size=l - 1, replace=False).tolist()) if l > 1 else []
            edges = [0] + cuts + [n]
            bounds = list(zip(edges[:-1], edges[1:]))
        out.append(Example(sents, [sents[0]], None, bounds))
    return out


def to_record(example: Example) -> dict:
    """JSONL record for an example (sentences re-joined with spaces)."""
    def join(sents):
        return [" ".join(s) for s in sents]

    if example.is_multi_doc:
        text = [join(example.sentences[s:e]) for s, e in example.doc_boundaries]
    else:
        text = join(example.sentences)
    rec = {"text": text, "summary": join(example.reference_summary)}
    if example.labels is not None:
        rec["label"] = list(example.labels)
    return rec
