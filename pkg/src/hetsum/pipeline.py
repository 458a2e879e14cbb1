"""Preprocessing artifacts (vocabulary, word filter, bucket boundaries) and instance preparation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import TrainConfig
from .graph import build_graph, fit_bucket_boundaries
from .model import Instance, encode_tokens
from .text import Example, Vocabulary, build_vocab, compute_word_filter, truncate

ARTIFACT_VERSION = "hetsum-artifacts/1"


class ArtifactError(ValueError):
    pass


@dataclass
class Artifacts:
    vocab: Vocabulary
    boundaries: list

    def to_dict(self) -> dict:
        body = {"vocab": self.vocab.to_dict(), "boundaries": list(self.boundaries)}
        return {"version": ARTIFACT_VERSION, "fingerprint": _fingerprint(body), **body}

    @classmethod
    def from_dict(cls, d: dict) -> "Artifacts":
        if d.get("version") != ARTIFACT_VERSION:
            raise ArtifactError(f"artifact version {d.get('version')!r} is not {ARTIFACT_VERSION!r}")
        art = cls(Vocabulary.from_dict(d["vocab"]), [float(b) for b in d["boundaries"]])
        if d.get("fingerprint") and d["fingerprint"] != art.fingerprint:
            raise ArtifactError("artifact fingerprint mismatch; file was modified or mixed")
        return art

    @property
    def fingerprint(self) -> str:
        return _fingerprint({"vocab": self.vocab.to_dict(), "boundaries": list(self.boundaries)})

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "Artifacts":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _fingerprint(body: dict) -> str:
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode("utf-8")).hexdigest()[:16]


def truncate_for(example: Example, config: TrainConfig) -> Example:
    return truncate(example, config.max_sentences, config.max_tokens_multidoc)


def fit_preprocessing(train_set: Sequence[Example], config: TrainConfig) -> Artifacts:
    """Vocabulary, filter set and edge-bucket boundaries from the training split only."""
    examples = [truncate_for(ex, config) for ex in train_set]
    vocab = build_vocab(examples, config.vocab_limit, config.d_w)
    compute_word_filter(vocab, config.effective_filter_fraction)
    weights = []
    for ex in examples:
        if ex.n:
            weights.extend(build_graph(ex, vocab, None, config.mode).edge_weight.tolist())
    boundaries = fit_bucket_boundaries(weights, config.edge_buckets)
    return Artifacts(vocab, boundaries)


def prepare(example: Example, artifacts: Artifacts, config: TrainConfig) -> Instance:
    ex = truncate_for(example, config)
    graph = build_graph(ex, artifacts.vocab, artifacts.boundaries, config.mode)
    tokens = encode_tokens(ex, artifacts.vocab, max(config.cnn_widths))
    labels = None if ex.labels is None else np.asarray(ex.labels, dtype=float)
    return Instance(ex, graph, tokens, labels)


def prepare_all(examples: Sequence[Example], artifacts: Artifacts, config: TrainConfig) -> list:
    return [prepare(ex, artifacts, config) for ex in examples]
