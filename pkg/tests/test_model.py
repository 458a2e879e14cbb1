import math

import numpy as np
import pytest

from hetsum.config import TrainConfig
from hetsum.graph import build_hdsg, build_hsg
from hetsum.model import FfnParams, GatParams, HeterSumModel, Instance, encode_tokens, ffn, gat_layer
from hetsum.numeric import Tensor, grad_check, no_grad
from hetsum.synthetic import random_corpus
from hetsum.text import Example, build_vocab

TINY = dict(d_w=6, d_s=8, d_e=3, d_h=4, heads=2, ffn_inner=8, cnn_filters=3, cnn_widths=(2, 3),
            filter_fraction=0.0)


def _t(x):
    return Tensor(np.array(x, dtype=float), requires_grad=True)


def tiny_setup(seed=0, n=5, mode="HSG", **changes):
    cfg = TrainConfig(**{**TINY, "mode": mode, "seed": seed, **changes})
    docs = (2, 2) if mode == "HDSG" else None
    ex = random_corpus(1, seed=seed, pool_size=40, sentences=(n, n), length=(3, 6), docs=docs)[0]
    rng = np.random.default_rng(seed)
    ex.labels = [int(v) for v in rng.integers(0, 2, size=ex.n)]
    vocab = build_vocab([ex], limit=50000, embedding_dim=cfg.d_w)
    graph = (build_hdsg if mode == "HDSG" else build_hsg)(ex, vocab, [0.5, 1.0])
    inst = Instance(ex, graph, encode_tokens(ex, vocab, max(cfg.cnn_widths)), np.array(ex.labels, float))
    return HeterSumModel(cfg, len(vocab)), inst


def jitter_off_kinks(model, seed):
    """Nudge every weight: zero-initialised biases put padded conv windows exactly on the ReLU kink."""
    rng = np.random.default_rng(seed)
    for p in model.params.values():
        p.data = p.data + rng.normal(0.0, 0.05, size=p.shape)


# -- GAT layer --

def test_gat_hand_trace():
    # 2 sentence queries, 2 word keys, d_h = 1, one head, d_e = 1
    params = GatParams(w_q=_t([[2.0]]), w_k=_t([[3.0]]), w_v=_t([[0.5]]), w_a=_t([[1.0, 1.0, 1.0]]),
                       edge_embeddings=_t([[0.1], [-0.2]]), heads=1)
    sents, words = _t([[1.0], [2.0]]), _t([[0.5], [-1.0]])
    dst, src, buckets = np.array([0, 0, 1]), np.array([0, 1, 1]), np.array([0, 1, 0])
    out, alpha = gat_layer(sents, words, dst, src, buckets, params, return_attention=True)

    z0 = 2 * 1 + 3 * 0.5 + 0.1
    z1 = 2 * 1 + 3 * -1.0 - 0.2
    z1 = 0.2 * z1 if z1 < 0 else z1
    a0 = math.exp(z0) / (math.exp(z0) + math.exp(z1))
    m0 = a0 * 0.25 + (1 - a0) * -0.5
    u0 = m0 if m0 > 0 else math.exp(m0) - 1
    u1 = math.exp(-0.5) - 1  # single neighbour: alpha = 1, message 0.5 * -1
    assert alpha.data[:, 0] == pytest.approx([a0, 1 - a0, 1.0], abs=1e-14)
    assert out.data[:, 0] == pytest.approx([u0 + 1.0, u1 + 2.0], abs=1e-14)


def _random_gat(rng, d=8, heads=2, d_e=3, buckets=4):
    dk = d // heads
    return GatParams(w_q=_t(rng.normal(size=(d, d))), w_k=_t(rng.normal(size=(d, d))),
                     w_v=_t(rng.normal(size=(d, d))), w_a=_t(rng.normal(size=(heads, 2 * dk + d_e))),
                     edge_embeddings=_t(rng.normal(size=(buckets, d_e))), heads=heads)


def test_attention_singleton_and_symmetric_neighbours():
    rng = np.random.default_rng(0)
    p = _random_gat(rng)
    q = _t(rng.normal(size=(2, 8)))
    kv_row = rng.normal(size=8)
    kv = _t(np.stack([kv_row, kv_row, rng.normal(size=8)]))
    dst, src, b = np.array([0, 0, 1]), np.array([0, 1, 2]), np.array([1, 1, 3])
    _, alpha = gat_layer(q, kv, dst, src, b, p, return_attention=True)
    assert np.allclose(alpha.data[0], 0.5) and np.allclose(alpha.data[1], 0.5)
    assert np.allclose(alpha.data[2], 1.0)


def test_isolated_query_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="no neighbours"):
        gat_layer(_t(rng.normal(size=(2, 8))), _t(rng.normal(size=(1, 8))), np.array([0]), np.array([0]),
                  np.array([0]), _random_gat(rng))


def test_attention_sums_to_one_per_query_and_head():
    rng = np.random.default_rng(1)
    for _ in range(10):
        nq, nk = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        pairs = {(i, int(rng.integers(nk))) for i in range(nq)}
        pairs |= {(int(rng.integers(nq)), int(rng.integers(nk))) for _ in range(8)}
        dst, src = (np.array(x) for x in zip(*sorted(pairs)))
        _, alpha = gat_layer(_t(rng.normal(size=(nq, 8))), _t(rng.normal(size=(nk, 8))), dst, src,
                             rng.integers(0, 4, size=len(dst)), _random_gat(rng), return_attention=True)
        sums = np.zeros((nq, 2))
        np.add.at(sums, dst, alpha.data)
        assert np.abs(sums - 1.0).max() <= 1e-9


def test_residual_identity_with_zero_values():
    rng = np.random.default_rng(2)
    p = _random_gat(rng)
    p.w_v = _t(np.zeros((8, 8)))
    q = _t(rng.normal(size=(3, 8)))
    out = gat_layer(q, _t(rng.normal(size=(2, 8))), np.array([0, 1, 2]), np.array([0, 1, 1]),
                    np.array([0, 1, 2]), p)
    assert np.array_equal(out.data, q.data)


# -- FFN --

def _ffn_params(w1, b1, w2, b2):
    return FfnParams(_t(w1), _t(b1), _t(w2), _t(b2))


def test_ffn_zero_weights_is_identity_and_rowwise():
    rng = np.random.default_rng(0)
    x = _t(rng.normal(size=(4, 3)))
    zero = _ffn_params(np.zeros((3, 5)), np.zeros(5), np.zeros((5, 3)), np.zeros(3))
    assert np.array_equal(ffn(x, zero).data, x.data)
    p = _ffn_params(rng.normal(size=(3, 5)), rng.normal(size=5), rng.normal(size=(5, 3)), rng.normal(size=3))
    perm = rng.permutation(4)
    assert np.allclose(ffn(_t(x.data[perm]), p).data, ffn(x, p).data[perm], atol=1e-14)


def test_ffn_hand_value():
    p = _ffn_params([[1.0, -1.0], [2.0, 0.5]], [0.0, 0.1], [[1.0, 0.0], [0.5, 2.0]], [0.2, -0.3])
    x = _t([[1.0, 2.0]])
    # inner = relu([1+4, -1+1+0.1]) = [5, 0.1]; W2 part = [5 + 0.05, 0.2] + b2 = [5.25, -0.1]
    assert ffn(x, p).data[0].tolist() == pytest.approx([6.25, 1.9], abs=1e-14)


# -- initializers --

def test_word_nodes_are_embedding_rows():
    model, inst = tiny_setup()
    xw = model.init_word_nodes(inst.graph).data
    assert xw.shape == (inst.graph.num_words, 6)
    assert np.array_equal(xw, model.embedding.data[inst.graph.word_nodes])
    assert len(set(inst.graph.word_nodes)) == inst.graph.num_words


def test_zero_embedding_table_gives_zero_word_features():
    model, inst = tiny_setup()
    model.embedding.data[:] = 0.0
    assert not model.init_word_nodes(inst.graph).data.any()


def test_sentence_features_shape_paper_dims():
    ex = random_corpus(1, seed=0, sentences=(7, 7))[0]
    cfg = TrainConfig(filter_fraction=0.0)
    vocab = build_vocab([ex], limit=50000)
    model = HeterSumModel(cfg, len(vocab))
    xs = model.init_sentence_nodes(encode_tokens(ex, vocab, 5))
    assert xs.shape == (7, 128)
    assert model.local_dim + 2 * model.lstm_hidden == 128


def test_permutation_changes_context_but_not_local_feature():
    model, inst = tiny_setup(n=5)
    ids = inst.token_ids
    perm = np.array([2, 0, 4, 1, 3])
    with no_grad():
        a = model.init_sentence_nodes(ids).data
        b = model.init_sentence_nodes(ids[perm]).data
    half = model.local_dim
    assert np.allclose(b[:, :half], a[perm, :half], atol=1e-14)
    assert not np.allclose(b[:, half:], a[perm, half:])


def test_single_sentence_document():
    model, inst = tiny_setup(n=1)
    assert model(inst).shape == (1,)


def test_empty_sentence_uses_pad_token():
    ex = Example([["xa", "xb"], []], [["xa"]])
    vocab = build_vocab([ex], limit=10)
    ids = encode_tokens(ex, vocab, 3)
    assert ids.shape == (2, 3) and not ids[1].any()


def test_document_nodes_are_sentence_means():
    model, inst = tiny_setup(mode="HDSG", n=6)
    with no_grad():
        xs = model.init_sentence_nodes(inst.token_ids).data
        xd = model.init_document_nodes(Tensor(xs), inst.graph).data
    for k, (a, b) in enumerate(inst.example.doc_boundaries):
        assert np.allclose(xd[k], xs[a:b].sum(axis=0) / (b - a), atol=1e-14)
    toy = HeterSumModel.init_document_nodes(Tensor(np.array([[1.0], [3.0]])),
                                            type("G", (), {"sentence_doc": [0, 0], "num_docs": 1})())
    assert toy.data.tolist() == [[2.0]]


# -- iterative updating and scoring --

def test_locality_before_word_update():
    model, inst = tiny_setup(n=5, t_override=0)
    g = inst.graph
    with no_grad():
        H_w, H_s = model.initial_states(inst)
        base = model.iterate(g, H_w, H_s, 0).H_s.data
        hw = H_w.data.copy()
        hw[0] = 0.0
        changed = model.iterate(g, Tensor(hw), H_s, 0).H_s.data
    touched = set(g.edge_super[g.edge_word == 0].tolist())
    for j in range(g.num_sentences):
        same = np.array_equal(base[j], changed[j])
        assert same == (j not in touched)


def test_t0_keeps_word_states_and_shapes_invariant():
    model, inst = tiny_setup(max_iterations=3)
    with no_grad():
        H_w, H_s = model.initial_states(inst)
        s0 = model.iterate(inst.graph, H_w, H_s, 0)
        assert np.array_equal(s0.H_w.data, H_w.data)
        for t in range(4):
            s = model.iterate(inst.graph, H_w, H_s, t)
            assert s.H_w.shape == H_w.shape and s.H_s.shape == H_s.shape and s.t == t


def test_t1_runs_one_word_and_two_sentence_updates():
    model, inst = tiny_setup()
    calls = []
    orig = model._update

    def spy(gat, ff, *args):
        calls.append("word" if gat is model.gat_w else "sentence")
        return orig(gat, ff, *args)

    model._update = spy
    with no_grad():
        model(inst)
    assert calls == ["sentence", "word", "sentence"]


def test_zero_scorer_gives_bias_logits():
    model, inst = tiny_setup()
    model.scorer[0].data[:] = 0.0
    model.scorer[1].data[:] = 0.7
    with no_grad():
        assert np.array_equal(model(inst).data, np.full(inst.n, 0.7))


def test_hdsg_scores_use_document_context():
    model, inst = tiny_setup(mode="HDSG", n=6)
    with no_grad():
        state = model.forward_state(inst)
        logits = model.score_sentences(state, inst.graph).data
    w, b = model.scorer[0].data[:, 0], model.scorer[1].data[0]
    owner = inst.graph.sentence_doc
    expect = [np.concatenate([state.H_s.data[j], state.H_d.data[owner[j]]]) @ w + b for j in range(inst.n)]
    assert np.allclose(logits, expect, atol=1e-13)
    bad = inst.graph
    bad.sentence_doc = [-1] + bad.sentence_doc[1:]
    with pytest.raises(ValueError, match="owning document"):
        model.score_sentences(state, bad)


def test_concat_variant_shape():
    model, inst = tiny_setup(no_residual_concat_variant=True)
    with no_grad():
        state = model.forward_state(inst)
    assert state.H_s.shape == (inst.n, 4)


def test_forward_is_deterministic():
    a, inst = tiny_setup(seed=3)
    b, _ = tiny_setup(seed=3)
    with no_grad():
        assert np.array_equal(a(inst).data, b(inst).data)


def test_unlabeled_loss_errors():
    model, inst = tiny_setup()
    inst.labels = None
    with pytest.raises(ValueError, match="label"):
        model.loss_sum(inst)


@pytest.mark.parametrize("mode,changes", [("HSG", {}), ("HDSG", {}), ("HSG", {"no_residual_concat_variant": True}),
                                          ("HSG", {"no_edge_feature": True, "no_bilstm": True})])
def test_full_model_gradients(mode, changes):
    model, inst = tiny_setup(seed=1, mode=mode, **changes)
    params = list(model.trainable().values())
    jitter_off_kinks(model, seed=1)
    report = grad_check(lambda *_: model.loss_sum(inst), params, tolerance=1e-3, max_elements=40)
    assert report.passed, report.max_rel_error


def test_overfit_single_document_ranks_oracle_first():
    cfg = TrainConfig(**{**TINY, "learning_rate": 1e-2, "max_epochs": 300, "batch_size": 1})
    ex = random_corpus(1, seed=11, sentences=(5, 5), pool_size=60)[0]
    ex.labels = [1, 0, 1, 0, 0]
    from hetsum.trainer import train

    ckpt = train(cfg, [ex], stop_below=0.01)
    assert ckpt.history[-1]["train_loss"] < 0.01
    from hetsum.pipeline import prepare

    with no_grad():
        logits = ckpt.model(prepare(ex, ckpt.artifacts, cfg)).data
    assert set(np.argsort(-logits)[:2].tolist()) == {0, 2}
