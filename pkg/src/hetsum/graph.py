"""Word-sentence (and word-sentence-document) graph construction."""
from __future__ import annotations

import bisect
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .text import TFIDF_FLOOR, UNK_ID, Example, Vocabulary, edge_tfidf

SENTENCE, DOCUMENT = 0, 1


def bucketize(tfidf: float, boundaries: Sequence[float]) -> int:
    """Index of the half-open interval ``[b_{k-1}, b_k)`` containing ``tfidf``."""
    if not tfidf > 0:
        raise ValueError(f"edge weight must be positive, got {tfidf}")
    return bisect.bisect_right(boundaries, tfidf)


def fit_bucket_boundaries(weights: Sequence[float], num_buckets: int = 10) -> list[float]:
    """Equal-frequency boundaries (``num_buckets - 1`` inner quantiles, deduplicated)."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or num_buckets <= 1:
        return []
    qs = np.quantile(w, np.arange(1, num_buckets) / num_buckets)
    out: list[float] = []
    for q in qs:
        q = float(q)
        if not out or q > out[-1]:
            out.append(q)
    return out


@dataclass
class HeteroGraph:
    """Bipartite word/supernode graph for one example.

    Supernodes are indexed jointly: sentences ``0..n-1`` then documents
    ``n..n+l-1``. Edge arrays are parallel.
    """

    word_nodes: list  # vocabulary ids, one per word node
    num_sentences: int
    num_docs: int = 0
    edge_word: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    edge_super: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    edge_weight: np.ndarray = field(default_factory=lambda: np.zeros(0))
    edge_bucket: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    sentence_doc: list = field(default_factory=list)

    @property
    def num_words(self) -> int:
        return len(self.word_nodes)

    @property
    def num_supernodes(self) -> int:
        return self.num_sentences + self.num_docs

    @property
    def sentence_nodes(self) -> list:
        return list(range(self.num_sentences))

    @property
    def doc_nodes(self) -> list:
        return list(range(self.num_docs))

    @property
    def edge_kind(self) -> np.ndarray:
        return (self.edge_super >= self.num_sentences).astype(np.int64)

    @property
    def edges(self) -> list:
        """(word_idx, supernode_idx, kind, weight, bucket) with per-kind supernode index."""
        out = []
        for w, s, x, b in zip(self.edge_word, self.edge_super, self.edge_weight, self.edge_bucket):
            kind = DOCUMENT if s >= self.num_sentences else SENTENCE
            local = int(s) - self.num_sentences if kind == DOCUMENT else int(s)
            out.append((int(w), local, kind, float(x), int(b)))
        return out

    def word_degree(self) -> np.ndarray:
        return np.bincount(self.edge_word, minlength=self.num_words)

    def super_degree(self) -> np.ndarray:
        return np.bincount(self.edge_super, minlength=self.num_supernodes)

    def adjacency(self) -> dict:
        """Neighbour lists ``(neighbour, edge_idx)`` keyed by ("w", i) or ("s"/"d", j)."""
        adj: dict = {}
        for e, (w, s) in enumerate(zip(self.edge_word.tolist(), self.edge_super.tolist())):
            skey = ("d", s - self.num_sentences) if s >= self.num_sentences else ("s", s)
            adj.setdefault(("w", w), []).append((skey, e))
            adj.setdefault(skey, []).append((("w", w), e))
        return adj

    def sentence_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_super < self.num_sentences)

    def to_json(self, vocab: Optional[Vocabulary] = None) -> str:
        words = list(self.word_nodes)
        if vocab is not None:
            words = [vocab.words[i] for i in words]
        return json.dumps({
            "word_nodes": words,
            "sentence_nodes": self.sentence_nodes,
            "doc_nodes": self.doc_nodes,
            "edges": [list(e) for e in self.edges],
        }, sort_keys=True)


def _node_words(tokens, vocab: Vocabulary) -> list:
    return [wid for wid in vocab.ids(tokens) if vocab.is_node_word(wid)]


def _add_supernode_edges(units: list, offset: int, word_index: dict, word_nodes: list,
                         boundaries, acc: dict) -> None:
    """Connect each unit (a list of node-word ids) to the words it contains."""
    degree = Counter()
    for unit in units:
        degree.update(set(unit))
    total = len(units)
    for j, unit in enumerate(units):
        counts = Counter(unit)
        if not counts:
            # every token filtered: fall back to the unk node so the supernode keeps a neighbour
            if UNK_ID not in word_index:
                word_index[UNK_ID] = len(word_nodes)
                word_nodes.append(UNK_ID)
            pairs = [(UNK_ID, TFIDF_FLOOR)]
        else:
            pairs = [(wid, edge_tfidf(counts[wid], total, degree[wid])) for wid in dict.fromkeys(unit)]
        for wid, weight in pairs:
            acc["w"].append(word_index[wid])
            acc["s"].append(offset + j)
            acc["x"].append(weight)
            acc["b"].append(bucketize(weight, boundaries) if boundaries is not None else 0)


def build_hsg(example: Example, vocab: Vocabulary, boundaries: Optional[Sequence[float]] = None) -> HeteroGraph:
    """Word-sentence graph with TF-IDF edge weights and bucket ids."""
    if example.n == 0:
        raise ValueError("empty document")
    units = [_node_words(sent, vocab) for sent in example.sentences]
    word_nodes: list = []
    word_index: dict = {}
    for unit in units:
        for wid in unit:
            if wid not in word_index:
                word_index[wid] = len(word_nodes)
                word_nodes.append(wid)
    acc = {"w": [], "s": [], "x": [], "b": []}
    _add_supernode_edges(units, 0, word_index, word_nodes, boundaries, acc)
    return HeteroGraph(
        word_nodes=word_nodes,
        num_sentences=example.n,
        num_docs=0,
        edge_word=np.array(acc["w"], dtype=np.int64),
        edge_super=np.array(acc["s"], dtype=np.int64),
        edge_weight=np.array(acc["x"], dtype=float),
        edge_bucket=np.array(acc["b"], dtype=np.int64),
        sentence_doc=[0] * example.n,
    )


def build_hdsg(example: Example, vocab: Vocabulary, boundaries: Optional[Sequence[float]] = None) -> HeteroGraph:
    """HSG plus one document supernode per source document."""
    if example.n == 0:
        raise ValueError("empty document")
    g = build_hsg(example, vocab, boundaries)
    word_nodes = list(g.word_nodes)
    word_index = {wid: i for i, wid in enumerate(word_nodes)}
    units = []
    for start, end in example.doc_boundaries:
        units.append([wid for j in range(start, end) for wid in _node_words(example.sentences[j], vocab)])
    acc = {"w": [], "s": [], "x": [], "b": []}
    _add_supernode_edges(units, example.n, word_index, word_nodes, boundaries, acc)
    return HeteroGraph(
        word_nodes=word_nodes,
        num_sentences=example.n,
        num_docs=len(units),
        edge_word=np.concatenate([g.edge_word, np.array(acc["w"], dtype=np.int64)]),
        edge_super=np.concatenate([g.edge_super, np.array(acc["s"], dtype=np.int64)]),
        edge_weight=np.concatenate([g.edge_weight, np.array(acc["x"], dtype=float)]),
        edge_bucket=np.concatenate([g.edge_bucket, np.array(acc["b"], dtype=np.int64)]),
        sentence_doc=example.doc_of_sentence(),
    )


def build_graph(example: Example, vocab: Vocabulary, boundaries=None, mode: str = "HSG") -> HeteroGraph:
    if mode == "HSG":
        return build_hsg(example, vocab, boundaries)
    if mode == "HDSG":
        return build_hdsg(example, vocab, boundaries)
    raise ValueError(f"unknown graph mode {mode!r}")
