"""Heterogeneous graph summarizer: node initializers, GAT layers, iterative updating, scorer."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import TrainConfig
from .graph import HeteroGraph
from .numeric import Tensor, ops
from .text import PAD_ID, Example, Vocabulary


# -- parameter containers -------------------------------------------------

@dataclass
class GatParams:
    w_q: Tensor  # (d_h, K * d_head)
    w_k: Tensor
    w_v: Tensor
    w_a: Tensor  # (K, 2 * d_head [+ d_e]); row k scores head k
    edge_embeddings: Optional[Tensor]  # (B, d_e), None when edge features are off
    heads: int

    @property
    def head_dim(self) -> int:
        return self.w_q.shape[1] // self.heads


@dataclass
class FfnParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    residual: bool = True
    ln_gain: Optional[Tensor] = None
    ln_bias: Optional[Tensor] = None


@dataclass
class IterationState:
    H_w: Tensor
    H_s: Tensor
    H_d: Optional[Tensor]
    t: int


def _activation(name: str):
    if name == "elu":
        return ops.elu
    if name == "relu":
        return ops.relu
    return lambda x: x


# -- graph layers -------------------------------------------------------------

def gat_layer(queries: Tensor, keys_values: Tensor, dst: np.ndarray, src: np.ndarray,
              buckets: Optional[np.ndarray], params: GatParams, slope: float = 0.2,
              activation: str = "elu", residual: bool = True, return_attention: bool = False):
    """Edge-aware multi-head graph attention.

    Edge ``e`` lets query row ``dst[e]`` attend to key row ``src[e]``. Per head:
    z = LeakyReLU(w_a . [W_q h_i; W_k h_j; emb(bucket_ij)]), alpha = softmax of z
    over each query's neighbours, u_i = act(sum_j alpha_ij W_v h_j); heads are
    concatenated and ``h_i`` is added back when ``residual``.
    """
    nq = queries.shape[0]
    counts = np.bincount(dst, minlength=nq)
    if nq and counts.min() == 0:
        raise ValueError(f"gat_layer: query node {int(np.argmin(counts))} has no neighbours")
    K, dk = params.heads, params.head_dim
    E = len(dst)
    q = ops.reshape(queries @ params.w_q, (nq, K, dk))
    k = ops.reshape(keys_values @ params.w_k, (keys_values.shape[0], K, dk))
    v = ops.reshape(keys_values @ params.w_v, (keys_values.shape[0], K, dk))

    a_q = params.w_a[:, 0:dk]
    a_k = params.w_a[:, dk:2 * dk]
    score_q = ops.sum(q * a_q, axis=-1)  # (nq, K)
    score_k = ops.sum(k * a_k, axis=-1)
    z = ops.gather_rows(score_q, dst) + ops.gather_rows(score_k, src)
    if params.edge_embeddings is not None:
        a_e = params.w_a[:, 2 * dk:]
        e = ops.embedding(params.edge_embeddings, buckets)  # (E, d_e)
        z = z + e @ ops.transpose(a_e)
    z = ops.leaky_relu(z, slope)
    alpha = ops.segment_softmax(z, dst, nq)  # (E, K)
    msg = ops.reshape(alpha, (E, K, 1)) * ops.gather_rows(v, src)
    agg = ops.reshape(ops.segment_sum(msg, dst, nq), (nq, K * dk))
    u = _activation(activation)(agg)
    out = u + queries if residual else u
    return (out, alpha) if return_attention else out


def ffn(x: Tensor, params: FfnParams) -> Tensor:
    """Position-wise feed-forward: x + W2 ReLU(W1 x + b1) + b2 (residual optional)."""
    inner = ops.relu(x @ params.w1 + params.b1)
    y = inner @ params.w2 + params.b2
    if params.residual:
        y = y + x
    if params.ln_gain is not None:
        y = ops.layer_norm(y, params.ln_gain, params.ln_bias)
    return y


# -- inputs ---------------------------------------------------------------------

@dataclass
class Instance:
    """One example prepared for the model."""

    example: Example
    graph: HeteroGraph
    token_ids: np.ndarray  # (n, L) padded with PAD_ID
    labels: Optional[np.ndarray]

    @property
    def n(self) -> int:
        return self.graph.num_sentences


def encode_tokens(example: Example, vocab: Vocabulary, min_len: int) -> np.ndarray:
    rows = [vocab.ids(s) or [PAD_ID] for s in example.sentences]
    width = max(min_len, max(len(r) for r in rows))
    out = np.full((len(rows), width), PAD_ID, dtype=np.int64)
    for j, r in enumerate(rows):
        out[j, :len(r)] = r
    return out


class HeterSumModel:
    """All trainable weights plus the forward pass."""

    def __init__(self, config: TrainConfig, vocab_size: int, embeddings: Optional[np.ndarray] = None,
                 seed: Optional[int] = None):
        self.config = config
        self.vocab_size = vocab_size
        rng = np.random.default_rng(config.seed if seed is None else seed)
        c = config
        self.params: dict = {}

        if embeddings is None:
            embeddings = rng.normal(0.0, c.embedding_init_std, size=(vocab_size, c.d_w))
            embeddings[PAD_ID] = 0.0
        if embeddings.shape != (vocab_size, c.d_w):
            raise ValueError(f"embedding table {embeddings.shape} does not match ({vocab_size}, {c.d_w})")
        self.embedding = Tensor(np.array(embeddings, dtype=float), requires_grad=not c.freeze_embeddings)
        self.params["embedding"] = self.embedding

        def weight(name, fan_in, fan_out, shape=None):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            t = Tensor(rng.uniform(-limit, limit, size=shape or (fan_in, fan_out)), requires_grad=True)
            self.params[name] = t
            return t

        def zeros(name, *shape):
            t = Tensor(np.zeros(shape), requires_grad=True)
            self.params[name] = t
            return t

        def ones(name, *shape):
            t = Tensor(np.ones(shape), requires_grad=True)
            self.params[name] = t
            return t

        # sentence initializer: CNN -> l_j, BiLSTM over l -> g_j
        self.local_dim = c.d_s if c.no_bilstm else c.d_s // 2
        self.lstm_hidden = 0 if c.no_bilstm else c.d_s // 4
        self.cnn = []
        for w in c.cnn_widths:
            self.cnn.append((w, weight(f"cnn.w{w}", w * c.d_w, c.cnn_filters), zeros(f"cnn.b{w}", c.cnn_filters)))
        conv_out = c.cnn_filters * len(c.cnn_widths)
        self.cnn_proj = (weight("cnn_proj.w", conv_out, self.local_dim), zeros("cnn_proj.b", self.local_dim))
        if not c.no_bilstm:
            h = self.lstm_hidden
            self.lstm_fwd = (weight("lstm_fwd.wx", self.local_dim, 4 * h), weight("lstm_fwd.wh", h, 4 * h),
                             zeros("lstm_fwd.b", 4 * h))
            self.lstm_bwd = (weight("lstm_bwd.wx", self.local_dim, 4 * h), weight("lstm_bwd.wh", h, 4 * h),
                             zeros("lstm_bwd.b", 4 * h))

        # projections into the shared hidden size
        self.word_proj = (weight("word_proj.w", c.d_w, c.d_h), zeros("word_proj.b", c.d_h))
        self.sent_proj = (weight("sent_proj.w", c.d_s, c.d_h), zeros("sent_proj.b", c.d_h))

        def gat(prefix):
            dk = c.d_h // c.heads
            score_dim = 2 * dk + (0 if c.no_edge_feature else c.d_e)
            edge = None if c.no_edge_feature else Tensor(rng.normal(0.0, 0.1, size=(c.edge_buckets, c.d_e)),
                                                         requires_grad=True)
            if edge is not None:
                self.params[f"{prefix}.edge_embeddings"] = edge
            return GatParams(
                w_q=weight(f"{prefix}.w_q", c.d_h, c.d_h), w_k=weight(f"{prefix}.w_k", c.d_h, c.d_h),
                w_v=weight(f"{prefix}.w_v", c.d_h, c.d_h),
                w_a=weight(f"{prefix}.w_a", score_dim, 1, shape=(c.heads, score_dim)),
                edge_embeddings=edge, heads=c.heads)

        def ffn_params(prefix):
            d_in = 2 * c.d_h if c.no_residual_concat_variant else c.d_h
            p = FfnParams(w1=weight(f"{prefix}.w1", d_in, c.ffn_inner), b1=zeros(f"{prefix}.b1", c.ffn_inner),
                          w2=weight(f"{prefix}.w2", c.ffn_inner, c.d_h), b2=zeros(f"{prefix}.b2", c.d_h),
                          residual=not c.no_residual_concat_variant)
            if c.layer_norm:
                p.ln_gain = ones(f"{prefix}.ln_gain", c.d_h)
                p.ln_bias = zeros(f"{prefix}.ln_bias", c.d_h)
            return p

        # word->sentence (supernode update) and sentence->word (word update)
        self.gat_s, self.ffn_s = gat("gat_s"), ffn_params("ffn_s")
        if c.iterations > 0:
            self.gat_w, self.ffn_w = gat("gat_w"), ffn_params("ffn_w")
        score_in = 2 * c.d_h if c.mode == "HDSG" else c.d_h
        self.scorer = (weight("scorer.w", score_in, 1), zeros("scorer.b", 1))

    # -- parameter access ------------------------------------------------------
    def trainable(self) -> dict:
        return {k: p for k, p in self.params.items() if p.requires_grad}

    def state_arrays(self) -> dict:
        return {k: p.data for k, p in self.params.items()}

    def load_arrays(self, arrays: dict) -> None:
        missing = sorted(set(self.params) - set(arrays))
        extra = sorted(set(arrays) - set(self.params))
        if missing or extra:
            raise ValueError(f"checkpoint parameters do not match model (missing={missing}, unexpected={extra})")
        for k, p in self.params.items():
            if arrays[k].shape != p.shape:
                raise ValueError(f"parameter {k}: checkpoint shape {arrays[k].shape} != model shape {p.shape}")
            p.data = np.array(arrays[k], dtype=float)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    # -- forward pieces --------------------------------------------------------
    def init_word_nodes(self, graph: HeteroGraph) -> Tensor:
        """Embedding rows of the graph's word nodes, (m, d_w)."""
        return ops.embedding(self.embedding, np.asarray(graph.word_nodes, dtype=np.int64))

    def init_sentence_nodes(self, token_ids: np.ndarray) -> Tensor:
        """[CNN local feature; BiLSTM context feature] per sentence, (n, d_s)."""
        mask = (token_ids != PAD_ID).astype(float)[:, :, None]
        emb = ops.embedding(self.embedding, token_ids) * mask
        pooled = [ops.max_over_time(ops.relu(ops.conv1d(emb, w, b))) for _, w, b in self.cnn]
        local = ops.concat(pooled, axis=-1) @ self.cnn_proj[0] + self.cnn_proj[1]
        if self.config.no_bilstm:
            return local
        context = ops.bilstm(local, self.lstm_fwd, self.lstm_bwd)
        return ops.concat([local, context], axis=-1)

    @staticmethod
    def init_document_nodes(X_s: Tensor, graph: HeteroGraph) -> Tensor:
        """Mean of each document's sentence features, (l, d_s)."""
        owner = np.asarray(graph.sentence_doc, dtype=np.int64)
        if len(owner) and owner.min() < 0:
            raise ValueError("sentence without an owning document")
        return ops.segment_mean(X_s, owner, graph.num_docs)

    def _update(self, gat: GatParams, ff: FfnParams, H_q: Tensor, H_kv: Tensor, dst, src, buckets) -> Tensor:
        c = self.config
        if c.no_residual_concat_variant:
            U = gat_layer(H_q, H_kv, dst, src, buckets, gat, c.leaky_slope, c.attention_activation, residual=False)
            return ffn(ops.concat([U, H_q], axis=-1), ff)
        U = gat_layer(H_q, H_kv, dst, src, buckets, gat, c.leaky_slope, c.attention_activation)
        return ffn(U + H_q, ff)

    def iterate(self, graph: HeteroGraph, H_w: Tensor, H_super: Tensor, t: Optional[int] = None) -> IterationState:
        """One word->supernode update, then ``t`` rounds of word update + supernode update."""
        t = self.config.iterations if t is None else t
        buckets = graph.edge_bucket
        word, sup = graph.edge_word, graph.edge_super
        H_super = self._update(self.gat_s, self.ffn_s, H_super, H_w, sup, word, buckets)
        for _ in range(t):
            H_w = self._update(self.gat_w, self.ffn_w, H_w, H_super, word, sup, buckets)
            H_super = self._update(self.gat_s, self.ffn_s, H_super, H_w, sup, word, buckets)
        n = graph.num_sentences
        if graph.num_docs:
            return IterationState(H_w, H_super[0:n], H_super[n:n + graph.num_docs], t)
        return IterationState(H_w, H_super, None, t)

    def score_sentences(self, state: IterationState, graph: HeteroGraph) -> Tensor:
        feats = state.H_s
        if self.config.mode == "HDSG":
            if state.H_d is None:
                raise ValueError("HDSG scoring needs document node states")
            owner = np.asarray(graph.sentence_doc, dtype=np.int64)
            if len(owner) and owner.min() < 0:
                raise ValueError("sentence without an owning document")
            feats = ops.concat([feats, ops.gather_rows(state.H_d, owner)], axis=-1)
        logits = feats @ self.scorer[0] + self.scorer[1]
        return ops.reshape(logits, (graph.num_sentences,))

    def initial_states(self, inst: Instance) -> tuple:
        g = inst.graph
        X_w = self.init_word_nodes(g)
        X_s = self.init_sentence_nodes(inst.token_ids)
        H_w = X_w @ self.word_proj[0] + self.word_proj[1]
        H_s = X_s @ self.sent_proj[0] + self.sent_proj[1]
        if g.num_docs:
            X_d = self.init_document_nodes(X_s, g)
            H_d = X_d @ self.sent_proj[0] + self.sent_proj[1]
            H_s = ops.concat([H_s, H_d], axis=0)
        return H_w, H_s

    def forward_state(self, inst: Instance, t: Optional[int] = None) -> IterationState:
        H_w, H_super = self.initial_states(inst)
        return self.iterate(inst.graph, H_w, H_super, t)

    def forward(self, inst: Instance) -> Tensor:
        return self.score_sentences(self.forward_state(inst), inst.graph)

    __call__ = forward

    def loss_sum(self, inst: Instance) -> Tensor:
        """Summed per-sentence binary cross-entropy for one instance."""
        if inst.labels is None:
            raise ValueError("example has no labels; run the `label` command first")
        return ops.sum(ops.bce_with_logits(self.forward(inst), inst.labels))
