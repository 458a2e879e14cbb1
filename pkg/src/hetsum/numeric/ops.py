"""Differentiable operations over :class:`Tensor`.

Only the operations needed by the graph summarizer live here: linear algebra,
pointwise activations, gathers/scatters over node and edge index arrays, the
CNN/LSTM sentence encoder pieces, segment softmax and the logistic loss.
Index arguments (segment ids, row ids) are plain integer numpy arrays.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, record


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# -- elementwise arithmetic ---------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)

    def backward(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return record(a.data / b.data, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return record(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return record(a.data @ b.data, (a, b), backward, "matmul")


# -- reductions and reshapes --------------------------------------------

def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record(np.asarray(out), (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape)) from None
    return record(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("transpose", a.shape, detail="expected a matrix")
    return record(a.data.T, (a,), lambda g: (g.T,), "transpose")


def getitem(a, idx) -> Tensor:
    """Basic or fancy indexing; repeated indices accumulate in backward."""
    a = as_tensor(a)
    try:
        out = a.data[idx]
    except IndexError as exc:
        raise ShapeError("getitem", a.shape, detail=str(exc)) from None

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return record(np.array(out), (a,), backward, "getitem")


def gather_rows(a, rows: np.ndarray) -> Tensor:
    """Row gather ``a[rows]`` along axis 0."""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= a.shape[0]):
        raise ShapeError("gather_rows", a.shape, rows.shape, detail="row index out of range")

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, rows, g)
        return (full,)

    return record(a.data[rows], (a,), backward, "gather_rows")


def embedding(table, ids: np.ndarray) -> Tensor:
    """Lookup of integer ``ids`` (any shape) into a ``(V, d)`` table."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError("embedding", table.shape, ids.shape, detail="id out of embedding range")
    flat = ids.reshape(-1)

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, flat, g.reshape(len(flat), -1))
        return (full,)

    return record(table.data[ids], (table,), backward, "embedding")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat", detail="no inputs")
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError("concat", ref, t.shape)
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors)))

    return record(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward, "concat")


# -- pointwise nonlinearities -------------------------------------------

def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return record(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return record(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return record(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return record(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return record(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return record(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    scale = np.where(a.data > 0, 1.0, slope)
    return record(a.data * scale, (a,), lambda g: (g * scale,), "leaky_relu")


def elu(a, alpha: float = 1.0) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    neg_part = alpha * np.expm1(np.minimum(a.data, 0.0))
    out = np.where(pos, a.data, neg_part)
    slope = np.where(pos, 1.0, neg_part + alpha)
    return record(out, (a,), lambda g: (g * slope,), "elu")


# -- segment (graph neighbourhood) ops ----------------------------------

def _check_segments(op: str, values: Tensor, segments: np.ndarray, num_segments: int) -> np.ndarray:
    segments = np.asarray(segments, dtype=np.int64)
    if segments.ndim != 1 or segments.shape[0] != values.shape[0]:
        raise ShapeError(op, values.shape, segments.shape, detail="one segment id per row")
    if segments.size and (segments.min() < 0 or segments.max() >= num_segments):
        raise ShapeError(op, values.shape, segments.shape, detail="segment id out of range")
    return segments


def segment_sum(values, segments: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``values`` that share a segment id."""
    values = as_tensor(values)
    segments = _check_segments("segment_sum", values, segments, num_segments)
    out = np.zeros((num_segments,) + values.shape[1:])
    np.add.at(out, segments, values.data)
    return record(out, (values,), lambda g: (g[segments],), "segment_sum")


def segment_mean(values, segments: np.ndarray, num_segments: int) -> Tensor:
    values = as_tensor(values)
    segments = _check_segments("segment_mean", values, segments, num_segments)
    counts = np.bincount(segments, minlength=num_segments).astype(float)
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        raise ValueError(f"segment_mean: segment {empty} is empty")
    shape = (num_segments,) + (1,) * (values.ndim - 1)
    return div(segment_sum(values, segments, num_segments), counts.reshape(shape))


def segment_softmax(values, segments: np.ndarray, num_segments: Optional[int] = None) -> Tensor:
    """Softmax over rows of ``values`` independently within each segment.

    Extra trailing axes (e.g. attention heads) are normalised independently.
    Every segment in ``[0, num_segments)`` must own at least one row.
    """
    values = as_tensor(values)
    segments = np.asarray(segments, dtype=np.int64)
    if num_segments is None:
        num_segments = int(segments.max()) + 1 if segments.size else 0
    segments = _check_segments("segment_softmax", values, segments, num_segments)
    counts = np.bincount(segments, minlength=num_segments)
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        raise ValueError(f"segment_softmax: segment {empty} has no entries")

    x = values.data
    seg_max = np.full((num_segments,) + x.shape[1:], -np.inf)
    np.maximum.at(seg_max, segments, x)
    ex = np.exp(x - seg_max[segments])
    denom = np.zeros_like(seg_max)
    np.add.at(denom, segments, ex)
    out = ex / denom[segments]

    def backward(g):
        dot = np.zeros_like(seg_max)
        np.add.at(dot, segments, g * out)
        return (out * (g - dot[segments]),)

    return record(out, (values,), backward, "segment_softmax")


# -- sentence encoder pieces ---------------------------------------------

def conv1d(x, weight, bias) -> Tensor:
    """Valid 1-D convolution over the time axis.

    ``x``: (batch, time, channels); ``weight``: (width * channels, filters);
    ``bias``: (filters,). Output: (batch, time - width + 1, filters).
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 3:
        raise ShapeError("conv1d", x.shape, weight.shape, detail="input must be (batch, time, channels)")
    n, steps, chans = x.shape
    if weight.ndim != 2 or weight.shape[0] % chans:
        raise ShapeError("conv1d", x.shape, weight.shape)
    width = weight.shape[0] // chans
    if steps < width:
        raise ShapeError("conv1d", x.shape, weight.shape, detail="sequence shorter than kernel")
    if bias.shape != (weight.shape[1],):
        raise ShapeError("conv1d", weight.shape, bias.shape)
    outlen = steps - width + 1
    # windows[b, t] = x[b, t:t+width].ravel()
    idx = np.arange(outlen)[:, None] + np.arange(width)[None, :]
    windows = x.data[:, idx, :].reshape(n, outlen, width * chans)
    out = windows @ weight.data + bias.data

    def backward(g):
        gw = windows.reshape(-1, width * chans).T @ g.reshape(-1, g.shape[-1])
        gb = g.sum(axis=(0, 1))
        gwin = (g @ weight.data.T).reshape(n, outlen, width, chans)
        gx = np.zeros_like(x.data)
        for k in range(width):
            gx[:, k:k + outlen, :] += gwin[:, :, k, :]
        return gx, gw, gb

    return record(out, (x, weight, bias), backward, "conv1d")


def max_over_time(x) -> Tensor:
    """Max over axis 1 of a (batch, time, features) tensor."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError("max_over_time", x.shape, detail="expected (batch, time, features)")
    arg = x.data.argmax(axis=1)
    out = np.take_along_axis(x.data, arg[:, None, :], axis=1)[:, 0, :]

    def backward(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, arg[:, None, :], g[:, None, :], axis=1)
        return (full,)

    return record(out, (x,), backward, "max_over_time")


def lstm_step(x, h, c, w_x, w_h, b):
    """One LSTM cell update; gate order is input, forget, cell, output."""
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    hidden = h.shape[-1]
    if w_x.shape[1] != 4 * hidden or w_h.shape != (hidden, 4 * hidden):
        raise ShapeError("lstm_step", w_x.shape, w_h.shape, detail=f"hidden={hidden}")
    gates = add(add(matmul(x, w_x), matmul(h, w_h)), b)
    i = sigmoid(gates[:, 0:hidden])
    f = sigmoid(gates[:, hidden:2 * hidden])
    cand = tanh(gates[:, 2 * hidden:3 * hidden])
    o = sigmoid(gates[:, 3 * hidden:4 * hidden])
    c_new = add(mul(f, c), mul(i, cand))
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


def lstm(xs, w_x, w_h, b, reverse: bool = False) -> Tensor:
    """Run an LSTM over the rows of ``xs`` (time, features); returns (time, hidden)."""
    xs = as_tensor(xs)
    hidden = w_h.shape[0]
    steps = range(xs.shape[0] - 1, -1, -1) if reverse else range(xs.shape[0])
    h = Tensor(np.zeros((1, hidden)))
    c = Tensor(np.zeros((1, hidden)))
    outs = [None] * xs.shape[0]
    for t in steps:
        h, c = lstm_step(xs[t:t + 1], h, c, w_x, w_h, b)
        outs[t] = h
    return concat(outs, axis=0)


def bilstm(xs, forward_params, backward_params) -> Tensor:
    """Concatenate forward and backward LSTM states per position."""
    fwd = lstm(xs, *forward_params)
    bwd = lstm(xs, *backward_params, reverse=True)
    return concat([fwd, bwd], axis=-1)


# -- losses ---------------------------------------------------------------

def bce_with_logits(logits, labels) -> Tensor:
    """Elementwise binary cross-entropy of ``sigmoid(logits)`` against 0/1 ``labels``."""
    logits = as_tensor(logits)
    y = np.asarray(labels.data if isinstance(labels, Tensor) else labels, dtype=float)
    if y.shape != logits.shape:
        raise ShapeError("bce_with_logits", logits.shape, y.shape)
    x = logits.data
    out = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    return record(out, (logits,), lambda g: (g * (_sigmoid(x) - y),), "bce_with_logits")


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Row-wise layer normalisation (composite)."""
    mu = mean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = mean(mul(centered, centered), axis=-1, keepdims=True)
    return add(mul(div(centered, sqrt(add(var, eps))), gain), bias)
