"""Mini-batch training with early stopping, checkpoints, evaluation and analyses."""
from __future__ import annotations

import copy
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .config import ConfigError, TrainConfig
from .decoding import decode
from .model import HeterSumModel, Instance
from .numeric import Adam, load_arrays, no_grad, ops, save_arrays
from .pipeline import Artifacts, fit_preprocessing, prepare_all
from .rouge import limited_length_recall, rouge_l, rouge_n, truncate_to_length
from .text import Example, load_embeddings

log = logging.getLogger("hetsum")

CHECKPOINT_KIND = "hetsum-checkpoint/1"
_DIM_KEYS = ("mode", "d_w", "d_s", "d_e", "d_h", "heads", "ffn_inner", "cnn_widths", "cnn_filters",
             "edge_buckets", "max_iterations", "t_override", "no_edge_feature", "no_bilstm",
             "no_residual_concat_variant", "layer_norm")


class TrainingError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    model: HeterSumModel
    config: TrainConfig
    artifacts: Artifacts
    epoch: int = 0
    best_valid_loss: float = math.inf
    history: list = field(default_factory=list)

    def save(self, path) -> None:
        meta = {
            "kind": CHECKPOINT_KIND,
            "config": self.config.to_dict(),
            "artifacts": self.artifacts.to_dict(),
            "epoch": self.epoch,
            "best_valid_loss": None if math.isinf(self.best_valid_loss) else self.best_valid_loss,
            # wall-clock timings stay out of the file so identical runs give identical bytes
            "history": [{k: (None if isinstance(v, float) and math.isnan(v) else v)
                         for k, v in h.items() if k != "seconds"} for h in self.history],
        }
        save_arrays(path, self.model.state_arrays(), meta)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        arrays, meta = load_arrays(path)
        if meta.get("kind") != CHECKPOINT_KIND:
            raise ConfigError(f"{path}: not a {CHECKPOINT_KIND} file")
        config = TrainConfig.from_dict({**meta["config"], "cnn_widths": tuple(meta["config"]["cnn_widths"])})
        artifacts = Artifacts.from_dict(meta["artifacts"])
        model = HeterSumModel(config, len(artifacts.vocab), embeddings=arrays["embedding"])
        model.load_arrays(arrays)
        best = meta.get("best_valid_loss")
        return cls(model, config, artifacts, int(meta.get("epoch", 0)),
                   math.inf if best is None else float(best), list(meta.get("history", [])))


# -- early stopping ------------------------------------------------------------

class EarlyStopping:
    """Track the best validation loss; signal a stop after ``patience`` epochs without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record ``loss`` for ``epoch``; return True when training should stop."""
        if loss < self.best:
            self.best, self.best_epoch, self.bad_epochs = loss, epoch, 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


# -- gradients -------------------------------------------------------------

def _check_finite(value: float, what: str) -> None:
    if not math.isfinite(value):
        raise TrainingError(f"non-finite {what}: {value}")


def batch_loss(model: HeterSumModel, batch: Sequence[Instance]):
    """Mean per-sentence BCE over the batch as one tape."""
    total = sum(inst.n for inst in batch)
    return ops.mul(ops.sum(ops.concat([ops.reshape(model.loss_sum(i), (1,)) for i in batch], axis=0)), 1.0 / total)


def accumulate_gradients(model: HeterSumModel, batch: Sequence[Instance], scale: float) -> float:
    """Backward each instance on its own tape, scaled by ``scale``; returns the summed loss."""
    total = 0.0
    for inst in batch:
        loss = model.loss_sum(inst)
        total += float(loss.data)
        ops.mul(loss, scale).backward()
    return total


class _Replica:
    """Per-worker view of the model: shared weight arrays, private gradients."""

    def __init__(self, master: HeterSumModel):
        self.model = copy.copy(master)
        self.master = master
        self.model.params = {}
        mapping = {}
        for k, p in master.params.items():
            clone = copy.copy(p)
            clone.grad = None
            mapping[id(p)] = clone
            self.model.params[k] = clone
        shared = {k: v for k, v in master.__dict__.items() if k not in ("params", "config")}
        self.model.__dict__.update(_remap(shared, mapping))

    def sync(self) -> None:
        for k, p in self.master.params.items():
            self.model.params[k].data = p.data
            self.model.params[k].grad = None


def _remap(obj, mapping):
    if isinstance(obj, dict):
        return {k: _remap(v, mapping) for k, v in obj.items()}
    if id(obj) in mapping:
        return mapping[id(obj)]
    if isinstance(obj, tuple):
        return tuple(_remap(v, mapping) for v in obj)
    if isinstance(obj, list):
        return [_remap(v, mapping) for v in obj]
    if hasattr(obj, "__dataclass_fields__"):
        clone = copy.copy(obj)
        for name in obj.__dataclass_fields__:
            setattr(clone, name, _remap(getattr(obj, name), mapping))
        return clone
    return obj


def parallel_gradients(model: HeterSumModel, replicas: list, batch: Sequence[Instance], scale: float) -> float:
    """Split ``batch`` over worker replicas and sum their gradients into ``model`` in shard order."""
    shards = [list(batch[i::len(replicas)]) for i in range(len(replicas))]
    for r in replicas:
        r.sync()
    with ThreadPoolExecutor(max_workers=len(replicas)) as pool:
        losses = list(pool.map(lambda rs: accumulate_gradients(rs[0].model, rs[1], scale), zip(replicas, shards)))
    for k, p in model.params.items():
        if not p.requires_grad:
            continue
        for r in replicas:
            g = r.model.params[k].grad
            if g is not None:
                p.grad = g.copy() if p.grad is None else p.grad + g
    return float(sum(losses))


def mean_loss(model: HeterSumModel, instances: Sequence[Instance]) -> float:
    total, count = 0.0, 0
    with no_grad():
        for inst in instances:
            total += float(model.loss_sum(inst).data)
            count += inst.n
    return total / max(count, 1)


# -- training ------------------------------------------------------------------

def build_model(config: TrainConfig, artifacts: Artifacts) -> HeterSumModel:
    emb = None
    if config.embedding_path:
        emb = load_embeddings(config.embedding_path, artifacts.vocab, config.d_w, seed=config.seed,
                              std=config.embedding_init_std)
    return HeterSumModel(config, len(artifacts.vocab), embeddings=emb)


def _require_labels(examples: Sequence[Example], split: str) -> None:
    for i, ex in enumerate(examples):
        if ex.labels is None:
            raise TrainingError(f"{split} example {i} has no labels; run the `label` command first")


def train(config: TrainConfig, train_set: Sequence[Example], valid_set: Optional[Sequence[Example]] = None,
          artifacts: Optional[Artifacts] = None, stop_below: Optional[float] = None,
          on_epoch: Optional[Callable] = None) -> Checkpoint:
    """Train with Adam on mean per-sentence BCE; keep the best-validation checkpoint.

    Without a validation split the last epoch is kept and early stopping is off.
    ``stop_below`` ends training once the epoch training loss falls under it.
    """
    _require_labels(train_set, "training")
    if valid_set is not None:
        _require_labels(valid_set, "validation")
    if not train_set:
        raise TrainingError("empty training set")
    artifacts = artifacts or fit_preprocessing(train_set, config)
    train_inst = prepare_all(train_set, artifacts, config)
    valid_inst = prepare_all(valid_set, artifacts, config) if valid_set else None
    model = build_model(config, artifacts)
    opt = Adam(model.trainable(), lr=config.learning_rate)
    replicas = [_Replica(model) for _ in range(config.workers)] if config.workers > 1 else []
    rng = np.random.default_rng(config.seed)
    stopper = EarlyStopping(config.patience_epochs)
    best_arrays = None
    history = []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(train_inst))
        loss_total, sent_total = 0.0, 0
        for b in range(0, len(order), config.batch_size):
            batch = [train_inst[i] for i in order[b:b + config.batch_size]]
            n_sent = sum(inst.n for inst in batch)
            if replicas:
                batch_sum = parallel_gradients(model, replicas, batch, 1.0 / n_sent)
            else:
                batch_sum = accumulate_gradients(model, batch, 1.0 / n_sent)
            _check_finite(batch_sum, "training loss")
            opt.step()
            loss_total += batch_sum
            sent_total += n_sent
        train_loss = loss_total / sent_total
        valid_loss = mean_loss(model, valid_inst) if valid_inst else float("nan")
        seconds = time.perf_counter() - start
        history.append({"epoch": epoch, "train_loss": train_loss, "valid_loss": valid_loss, "seconds": seconds})
        log.info("epoch=%d train_loss=%.6f valid_loss=%.6f", epoch, train_loss, valid_loss)
        if on_epoch is not None:
            on_epoch(history[-1])
        if valid_inst:
            stop = stopper.update(epoch, valid_loss)
            if stopper.best_epoch == epoch:
                best_arrays = {k: v.copy() for k, v in model.state_arrays().items()}
            if stop:
                break
        if stop_below is not None and train_loss < stop_below:
            break
    if best_arrays is not None:
        model.load_arrays(best_arrays)
        best_epoch, best_loss = stopper.best_epoch, stopper.best
    else:
        best_epoch, best_loss = epoch, math.inf
    return Checkpoint(model, config, artifacts, best_epoch, best_loss, history)


# -- evaluation ------------------------------------------------------------------

def sentence_scores(checkpoint: Checkpoint, instances: Sequence[Instance]) -> list:
    with no_grad():
        return [checkpoint.model(inst).data.copy() for inst in instances]


def summarize(checkpoint: Checkpoint, examples: Sequence[Example]) -> list:
    """Selected sentence indices (document order) per example."""
    cfg = checkpoint.config
    instances = prepare_all(examples, checkpoint.artifacts, cfg)
    out = []
    for inst, scores in zip(instances, sentence_scores(checkpoint, instances)):
        sel = decode(scores, inst.example.sentences, cfg.select_k, cfg.use_tri_blocking)
        out.append(list(sel.sentence_indices))
    return out


def score_selection(selected: list, reference: list, metric: str) -> dict:
    if metric == "limited_length_recall":
        r1, r2 = limited_length_recall(selected, reference)
        cut = truncate_to_length(selected, sum(len(r) for r in reference))
        return {"R1": r1.recall, "R2": r2.recall, "RL": rouge_l(cut, reference).recall}
    return {"R1": rouge_n(selected, reference, 1).f1, "R2": rouge_n(selected, reference, 2).f1,
            "RL": rouge_l(selected, reference).f1}


def check_compatible(config: TrainConfig, checkpoint: Checkpoint) -> None:
    for key in _DIM_KEYS:
        a, b = getattr(config, key), getattr(checkpoint.config, key)
        if a != b:
            raise ConfigError(f"config {key}={a!r} does not match checkpoint {key}={b!r}")


def per_example_scores(checkpoint: Checkpoint, examples: Sequence[Example], metric: Optional[str] = None,
                       selections: Optional[list] = None) -> list:
    metric = metric or checkpoint.config.metric
    instances = prepare_all(examples, checkpoint.artifacts, checkpoint.config)
    selections = selections if selections is not None else summarize(checkpoint, examples)
    rows = []
    for inst, sel in zip(instances, selections):
        chosen = [inst.example.sentences[j] for j in sel]
        rows.append(score_selection(chosen, inst.example.reference_summary, metric))
    return rows


def evaluate(checkpoint: Checkpoint, test_set: Sequence[Example], metric: Optional[str] = None,
             config: Optional[TrainConfig] = None) -> dict:
    """Corpus-mean R1/R2/RL of the decoded selections."""
    if not test_set:
        raise ValueError("empty test set")
    if config is not None:
        check_compatible(config, checkpoint)
    metric = metric or checkpoint.config.metric
    rows = per_example_scores(checkpoint, test_set, metric)
    report = {k: float(np.mean([r[k] for r in rows])) for k in ("R1", "R2", "RL")}
    report["R_mean"] = (report["R1"] + report["R2"] + report["RL"]) / 3.0
    report["metric"] = metric
    report["num_examples"] = len(rows)
    return report


# -- analyses ------------------------------------------------------------------------

def _r_tilde(row: dict) -> float:
    return (row["R1"] + row["R2"] + row["RL"]) / 3.0


def analyze(checkpoint: Checkpoint, test_set: Sequence[Example], analysis: str,
            train_set: Optional[Sequence[Example]] = None, num_intervals: int = 5,
            min_bucket_size: Optional[int] = None, sweep=(0, 1, 2, 3), sweep_epochs: int = 1) -> list:
    """Tabulate ROUGE by word-node degree, by source-document count, or across iteration counts."""
    if not test_set:
        raise ValueError("empty test set")
    cfg = checkpoint.config
    if analysis == "word_degree_buckets":
        instances = prepare_all(test_set, checkpoint.artifacts, cfg)
        degrees = np.array([inst.graph.word_degree().mean() if inst.graph.num_words else 0.0
                            for inst in instances])
        rows = per_example_scores(checkpoint, test_set)
        lo, hi = float(degrees.min()), float(degrees.max())
        edges = np.linspace(lo, hi, num_intervals + 1)
        which = np.clip(np.searchsorted(edges, degrees, side="right") - 1, 0, num_intervals - 1)
        table = []
        for b in range(num_intervals):
            members = [rows[i] for i in np.flatnonzero(which == b)]
            table.append({"interval": [float(edges[b]), float(edges[b + 1])], "count": len(members),
                          "R_tilde": float(np.mean([_r_tilde(r) for r in members])) if members else None})
        return table
    if analysis == "source_doc_count":
        minimum = cfg.min_bucket_size if min_bucket_size is None else min_bucket_size
        rows = per_example_scores(checkpoint, test_set)
        groups: dict = {}
        for ex, row in zip(test_set, rows):
            groups.setdefault(len(ex.doc_boundaries), []).append(row)
        return [{"num_docs": k, "count": len(v), "R_tilde": float(np.mean([_r_tilde(r) for r in v]))}
                for k, v in sorted(groups.items()) if len(v) >= minimum]
    if analysis == "iteration_sweep":
        source = train_set if train_set is not None else test_set
        table = []
        for t in sweep:
            run_cfg = cfg.replace(t_override=t, max_epochs=sweep_epochs)
            ckpt = train(run_cfg, source, None, artifacts=checkpoint.artifacts)
            report = evaluate(ckpt, test_set)
            seconds = float(np.median([h["seconds"] for h in ckpt.history]))
            table.append({"t": t, "R1": report["R1"], "R2": report["R2"], "RL": report["RL"],
                          "epoch_seconds": seconds})
        return table
    raise ValueError(f"unknown analysis {analysis!r}")
