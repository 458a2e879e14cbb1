"""Tokenization, vocabulary, TF-IDF weights, word filtering and truncation."""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

PAD, UNK = "<pad>", "<unk>"
SPECIALS = (PAD, UNK)
PAD_ID, UNK_ID = 0, 1
TFIDF_FLOOR = 1e-4

# fmt: off
STOPWORDS = frozenset("""
i me my myself we our ours ourselves you you're you've you'll you'd your yours yourself
yourselves he him his himself she she's her hers herself it it's its itself they them
their theirs themselves what which who whom this that that'll these those am is are was
were be been being have has had having do does did doing a an the and but if or because
as until while of at by for with about against between into through during before after
above below to from up down in out on off over under again further then once here there
when where why how all any both each few more most other some such no nor not only own
same so than too very s t can will just don don't should should've now d ll m o re ve y
ain aren aren't couldn couldn't didn didn't doesn doesn't hadn hadn't hasn hasn't haven
haven't isn isn't ma mightn mightn't mustn mustn't needn needn't shan shan't shouldn
shouldn't wasn wasn't weren weren't won won't wouldn wouldn't
""".split())
# fmt: on

_TOKEN = re.compile(r"\w+|[^\w\s]")


def tokenize(raw: str) -> list[str]:
    """Lowercase, split on whitespace and detach every punctuation character."""
    return _TOKEN.findall(raw.lower())


def is_punctuation(token: str) -> bool:
    return not any(ch.isalnum() for ch in token)


@dataclass
class Example:
    sentences: list  # list of token lists
    reference_summary: list = field(default_factory=list)
    labels: Optional[list] = None
    doc_boundaries: list = field(default_factory=list)  # [(start, end), ...]

    def __post_init__(self):
        if not self.doc_boundaries:
            self.doc_boundaries = [(0, len(self.sentences))]
        self.doc_boundaries = [tuple(b) for b in self.doc_boundaries]
        self.validate()

    @property
    def n(self) -> int:
        return len(self.sentences)

    @property
    def is_multi_doc(self) -> bool:
        return len(self.doc_boundaries) > 1

    def doc_of_sentence(self) -> list[int]:
        owner = [-1] * self.n
        for d, (start, end) in enumerate(self.doc_boundaries):
            for j in range(start, end):
                owner[j] = d
        return owner

    def validate(self) -> None:
        if self.labels is not None and len(self.labels) != self.n:
            raise ValueError(f"labels have length {len(self.labels)} but there are {self.n} sentences")
        pos = 0
        for start, end in self.doc_boundaries:
            if start != pos or end < start:
                raise ValueError(f"doc_boundaries {self.doc_boundaries} do not partition [0, {self.n})")
            pos = end
        if pos != self.n:
            raise ValueError(f"doc_boundaries {self.doc_boundaries} do not partition [0, {self.n})")


def example_from_record(record: dict) -> Example:
    """Build an :class:`Example` from one JSONL record.

    ``text`` is either a list of sentence strings or a list of source documents,
    each a list of sentence strings.
    """
    text = record.get("text")
    if text is None or "summary" not in record:
        raise ValueError("record needs 'text' and 'summary' fields")
    if text and all(isinstance(doc, list) for doc in text):
        sentences, bounds = [], []
        for doc in text:
            start = len(sentences)
            sentences.extend(tokenize(s) for s in doc)
            bounds.append((start, len(sentences)))
    else:
        sentences = [tokenize(s) for s in text]
        bounds = [(0, len(sentences))]
    summary = [tokenize(s) for s in record["summary"]]
    labels = record.get("label")
    if labels is not None:
        labels = [int(v) for v in labels]
    return Example(sentences, summary, labels, bounds)


def read_jsonl(path) -> list[dict]:
    """Parse a JSON Lines file; errors carry the 1-based line number."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise DataError(f"line {lineno}: expected a JSON object")
            records.append(rec)
    return records


def load_examples(path) -> tuple[list[dict], list[Example]]:
    records = read_jsonl(path)
    examples = []
    for lineno, rec in enumerate(records, start=1):
        try:
            examples.append(example_from_record(rec))
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
    return records, examples


class DataError(ValueError):
    pass


@dataclass
class Vocabulary:
    words: list  # id -> word, specials first
    doc_freq: list  # per id, number of training documents containing the word
    term_freq: list  # per id, total occurrences over the training split
    num_docs: int
    filtered: frozenset = frozenset()
    embedding_dim: int = 300

    def __post_init__(self):
        self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def id(self, word: str) -> int:
        return self.index.get(word, UNK_ID)

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def is_node_word(self, wid: int) -> bool:
        return wid >= len(SPECIALS) and wid not in self.filtered

    def to_dict(self) -> dict:
        return {"words": self.words, "doc_freq": self.doc_freq, "term_freq": self.term_freq,
                "num_docs": self.num_docs, "filtered": sorted(self.filtered),
                "embedding_dim": self.embedding_dim}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(list(d["words"]), list(d["doc_freq"]), list(d["term_freq"]), int(d["num_docs"]),
                   frozenset(d.get("filtered", ())), int(d.get("embedding_dim", 300)))


def build_vocab(corpus: Sequence[Example], limit: int = 50000, embedding_dim: int = 300) -> Vocabulary:
    """Keep the ``limit`` most frequent words (ties: lexicographic), plus specials."""
    if limit < len(SPECIALS):
        raise ValueError(f"vocab limit {limit} is smaller than the {len(SPECIALS)} special tokens")
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    tf: Counter = Counter()
    df: Counter = Counter()
    for ex in corpus:
        seen = set()
        for sent in ex.sentences:
            tf.update(sent)
            seen.update(sent)
        df.update(seen)
    for sp in SPECIALS:
        tf.pop(sp, None)
        df.pop(sp, None)
    ranked = sorted(tf.items(), key=lambda kv: (-kv[1], kv[0]))[:limit]
    words = list(SPECIALS) + [w for w, _ in ranked]
    return Vocabulary(
        words=words,
        doc_freq=[0, 0] + [df[w] for w, _ in ranked],
        term_freq=[0, 0] + [c for _, c in ranked],
        num_docs=len(corpus),
        embedding_dim=embedding_dim,
    )


def corpus_tfidf(vocab: Vocabulary, wid: int) -> float:
    return vocab.term_freq[wid] * math.log(vocab.num_docs / (1 + vocab.doc_freq[wid]))


def compute_word_filter(vocab: Vocabulary, fraction: float = 0.1) -> frozenset:
    """Stopwords, punctuation, and the lowest-TF-IDF ``fraction`` of the rest.

    The result is stored on ``vocab.filtered`` and returned.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"filter fraction must lie in [0, 1), got {fraction}")
    base = set()
    rest = []
    for wid in range(len(SPECIALS), len(vocab)):
        word = vocab.words[wid]
        if word in STOPWORDS or is_punctuation(word):
            base.add(wid)
        else:
            rest.append(wid)
    rest.sort(key=lambda wid: (corpus_tfidf(vocab, wid), vocab.words[wid]))
    drop = int(math.floor(fraction * len(rest) + 1e-9))
    filtered = frozenset(base | set(rest[:drop]))
    vocab.filtered = filtered
    return filtered


def edge_tfidf(tf: int, num_supernodes: int, degree: int) -> float:
    """TF-IDF weight of a word-supernode edge.

    ``tf`` counts the word inside the supernode; ``degree`` is how many of the
    ``num_supernodes`` supernodes of this kind contain the word.
    """
    if tf <= 0:
        raise ValueError("word does not occur in the supernode; the edge must not exist")
    weight = tf * math.log(num_supernodes / (1 + degree))
    return max(weight, TFIDF_FLOOR)


def truncate(example: Example, max_sentences: int = 50, max_tokens_multidoc: int = 500) -> Example:
    """Cap sentences (and per-source token budgets for multi-document input)."""
    if max_sentences <= 0 or max_tokens_multidoc <= 0:
        raise ValueError("truncation limits must be positive")
    labels = example.labels
    if not example.is_multi_doc:
        keep = list(range(min(example.n, max_sentences)))
        bounds = [(0, len(keep))]
    else:
        keep, bounds = [], []
        for start, end in example.doc_boundaries:
            used = 0
            first = len(keep)
            for j in range(start, end):
                cost = len(example.sentences[j])
                if used + cost > max_tokens_multidoc:
                    break
                used += cost
                keep.append(j)
            bounds.append((first, len(keep)))
        if len(keep) > max_sentences:
            keep = keep[:max_sentences]
            bounds = [(min(s, max_sentences), min(e, max_sentences)) for s, e in bounds]
        bounds = [b for b in bounds if b[1] > b[0]] or [(0, 0)]
    return Example(
        sentences=[example.sentences[j] for j in keep],
        reference_summary=example.reference_summary,
        labels=None if labels is None else [labels[j] for j in keep],
        doc_boundaries=bounds,
    )


def load_embeddings(path, vocab: Vocabulary, dim: int, seed: int = 0, std: float = 0.1) -> np.ndarray:
    """Build a ``(len(vocab), dim)`` table from a GloVe-style text file.

    Words missing from the file are drawn from N(0, std^2); the pad row is zero.
    """
    rng = np.random.default_rng(seed)
    table = rng.normal(0.0, std, size=(len(vocab), dim))
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.rstrip().split(" ")
                if len(parts) < 2:
                    continue
                wid = vocab.index.get(parts[0])
                if wid is None:
                    continue
                if len(parts) - 1 != dim:
                    raise DataError(f"line {lineno}: embedding has {len(parts) - 1} values, expected {dim}")
                table[wid] = np.array(parts[1:], dtype=float)
    table[PAD_ID] = 0.0
    return table
