"""Differentiable operations.

Every function takes/returns :class:`Tensor` and registers a backward
closure on the output.  Gradient formulas are the standard ones; broadcast
operands are reduced back to their original shape with ``_unbroadcast``.
"""

from __future__ import annotations

import builtins

import numpy as np

from ..errors import ContractViolation
from .tensor import Tensor, _unbroadcast, as_tensor

# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return Tensor._from_op(out_data, (a, b), "add", backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return Tensor._from_op(out_data, (a, b), "sub", backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor._from_op(out_data, (a, b), "mul", backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return Tensor._from_op(out_data, (a, b), "div", backward)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(-g)

    return Tensor._from_op(-a.data, (a,), "neg", backward)


def pow_const(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out_data = a.data ** exponent

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * exponent * a.data ** (exponent - 1))

    return Tensor._from_op(out_data, (a,), f"pow{exponent}", backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data)

    return Tensor._from_op(out_data, (a,), "exp", backward)


def log(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return Tensor._from_op(np.log(a.data), (a,), "log", backward)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.sqrt(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * 0.5 / out_data)

    return Tensor._from_op(out_data, (a,), "sqrt", backward)


def abs(a) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * np.sign(a.data))

    return Tensor._from_op(np.abs(a.data), (a,), "abs", backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return Tensor._from_op(a.data * mask, (a,), "relu", backward)


def gelu(a) -> Tensor:
    """tanh-approximation GELU."""
    a = as_tensor(a)
    c = a.dtype.type(np.sqrt(2.0 / np.pi))
    x = a.data
    inner = c * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + t)

    def backward(g):
        if a.requires_grad:
            dinner = c * (1.0 + 3 * 0.044715 * x ** 2)
            da = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
            a._accumulate(g * da)

    return Tensor._from_op(out_data, (a,), "gelu", backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - out_data * out_data))

    return Tensor._from_op(out_data, (a,), "tanh", backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data * (1.0 - out_data))

    return Tensor._from_op(out_data, (a,), "sigmoid", backward)


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.logaddexp(0.0, a.data).astype(a.dtype)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / (1.0 + np.exp(-a.data)))

    return Tensor._from_op(out_data, (a,), "softplus", backward)


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).copy())

    return Tensor._from_op(out_data, (a,), "sum", backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])

    def backward(g):
        if not a.requires_grad:
            return
        g = g / count
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).copy())

    return Tensor._from_op(out_data, (a,), "mean", backward)


def cumsum(a, axis: int) -> Tensor:
    a = as_tensor(a)
    out_data = np.cumsum(a.data, axis=axis)

    def backward(g):
        if a.requires_grad:
            rev = np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis)
            a._accumulate(np.ascontiguousarray(rev))

    return Tensor._from_op(out_data, (a,), "cumsum", backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    if isinstance(shape, int):
        shape = (shape,)
    shape = tuple(shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.shape))

    return Tensor._from_op(a.data.reshape(shape), (a,), "reshape", backward)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.transpose(axes)
    if axes is None:
        inv = None
    else:
        inv = tuple(np.argsort(axes))

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.transpose(inv))

    return Tensor._from_op(out_data, (a,), "transpose", backward)


def _is_advanced_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (np.ndarray, list)) for i in items)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    out_data = a.data[idx]

    def backward(g):
        if a.requires_grad:
            da = np.zeros_like(a.data)
            if _is_advanced_index(idx):
                # advanced indexing may repeat positions: unbuffered scatter-add
                np.add.at(da, idx, g)
            else:
                da[idx] += g
            a._accumulate(da)

    return Tensor._from_op(np.ascontiguousarray(out_data), (a,), "getitem", backward)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(start, stop)
                t._accumulate(np.ascontiguousarray(g[tuple(sl)]))

    return Tensor._from_op(out_data, tuple(tensors), "concat", backward)


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.ascontiguousarray(np.take(g, i, axis=axis)))

    return Tensor._from_op(out_data, tuple(tensors), "stack", backward)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ContractViolation("matmul requires tensors with ndim >= 2")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            da = g @ b.data.swapaxes(-1, -2)
            a._accumulate(_unbroadcast(da, a.shape))
        if b.requires_grad:
            db = a.data.swapaxes(-1, -2) @ g
            b._accumulate(_unbroadcast(db, b.shape))

    return Tensor._from_op(out_data, (a, b), "matmul", backward)


def embedding(weight, ids) -> Tensor:
    """Row lookup ``weight[ids]`` with scatter-add backward."""
    weight = as_tensor(weight)
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise IndexError(
            f"token id out of range [0, {weight.shape[0]}): "
            f"min={ids.min()}, max={ids.max()}")
    out_data = weight.data[ids]

    def backward(g):
        if weight.requires_grad:
            dw = np.zeros_like(weight.data)
            np.add.at(dw, ids.ravel(), g.reshape(-1, weight.shape[1]))
            weight._accumulate(dw)

    return Tensor._from_op(out_data, (weight,), "embedding", backward)


# ---------------------------------------------------------------------------
# normalization and softmax
# ---------------------------------------------------------------------------


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out_data = gamma.data * xhat + beta.data

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, x.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gx = g * gamma.data
            m1 = gx.mean(axis=-1, keepdims=True)
            m2 = (gx * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gx - m1 - xhat * m2))

    return Tensor._from_op(out_data, (x, gamma, beta), "layer_norm", backward)


def softmax(x, axis: int = -1) -> Tensor:
    """Softmax; rows may contain ``-inf`` entries (additive masking)."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * out_data).sum(axis=axis, keepdims=True)
            x._accumulate(out_data * (g - dot))

    return Tensor._from_op(out_data, (x,), "softmax", backward)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse
    p = np.exp(out_data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g - p * g.sum(axis=axis, keepdims=True))

    return Tensor._from_op(out_data, (x,), "log_softmax", backward)


def softmax_cross_entropy(logits, target) -> Tensor:
    """``-log softmax(logits)[target]``, averaged when targets are batched.

    ``logits`` is ``(V,)`` with an integer target, or ``(N, V)`` with ``(N,)``
    integer targets.  Raises ``IndexError`` for out-of-range targets.
    """
    logits = as_tensor(logits)
    if logits.ndim == 1:
        v = logits.shape[0]
        if v < 2:
            raise ContractViolation("cross entropy needs at least 2 classes")
        t = int(target)
        if not 0 <= t < v:
            raise IndexError(f"target {t} out of range [0, {v})")
        lp = log_softmax(logits.reshape(1, v), axis=-1)
        return neg(lp[0, t])
    targets = np.asarray(target)
    v = logits.shape[-1]
    if v < 2:
        raise ContractViolation("cross entropy needs at least 2 classes")
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise IndexError(f"target out of range [0, {v})")
    lp = log_softmax(logits, axis=-1)
    picked = getitem(lp, (np.arange(targets.shape[0]), targets))
    return neg(mean(picked))


# ---------------------------------------------------------------------------
# convolution (NHWC layout, im2col / col2im)
# ---------------------------------------------------------------------------


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """(B, H, W, C) -> (B, Ho, Wo, kh, kw, C) patches."""
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    # win: (B, Hp-kh+1, Wp-kw+1, C, kh, kw)
    win = win[:, ::stride, ::stride]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))


def _col2im(cols: np.ndarray, stride: int, pad: int, out_h: int, out_w: int) -> np.ndarray:
    """Scatter (B, Ho, Wo, kh, kw, C) patches back to (B, out_h, out_w, C)."""
    b, ho, wo, kh, kw, c = cols.shape
    out = np.zeros((b, out_h + 2 * pad, out_w + 2 * pad, c), dtype=cols.dtype)
    for di in range(kh):
        for dj in range(kw):
            out[:, di:di + stride * ho:stride, dj:dj + stride * wo:stride] += cols[:, :, :, di, dj]
    if pad:
        out = out[:, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out)


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2D convolution; ``x`` is (B, H, W, Cin), ``weight`` (kh, kw, Cin, Cout)."""
    x, weight = as_tensor(x), as_tensor(weight)
    kh, kw, cin, cout = weight.shape
    if x.ndim != 4 or x.shape[-1] != cin:
        raise ContractViolation(
            f"conv2d input must be (B, H, W, {cin}), got {x.shape}")
    cols = _im2col(x.data, kh, kw, stride, padding)
    b, ho, wo = cols.shape[:3]
    flat = cols.reshape(b * ho * wo, kh * kw * cin)
    out_data = flat @ weight.data.reshape(kh * kw * cin, cout)
    out_data = out_data.reshape(b, ho, wo, cout)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out_data = out_data + bias.data
        parents.append(bias)

    def backward(g):
        gflat = g.reshape(b * ho * wo, cout)
        if weight.requires_grad:
            dw = flat.T @ gflat
            weight._accumulate(dw.reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(gflat.sum(axis=0))
        if x.requires_grad:
            dcols = gflat @ weight.data.reshape(kh * kw * cin, cout).T
            dcols = dcols.reshape(b, ho, wo, kh, kw, cin)
            x._accumulate(_col2im(dcols, stride, padding, x.shape[1], x.shape[2]))

    return Tensor._from_op(out_data, tuple(parents), "conv2d", backward)


def conv_transpose2d(x, weight, bias=None, stride: int = 2, padding: int = 1) -> Tensor:
    """Transposed convolution; ``x`` is (B, h, w, Cin), ``weight`` (kh, kw, Cout, Cin).

    Output spatial size is ``stride*(h-1) + kh - 2*padding`` (exact doubling
    for kh=4, stride=2, padding=1).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    kh, kw, cout, cin = weight.shape
    if x.ndim != 4 or x.shape[-1] != cin:
        raise ContractViolation(
            f"conv_transpose2d input must be (B, h, w, {cin}), got {x.shape}")
    b, h, w = x.shape[:3]
    out_h = stride * (h - 1) + kh - 2 * padding
    out_w = stride * (w - 1) + kw - 2 * padding
    wmat = weight.data.reshape(kh * kw * cout, cin)
    prod = x.data.reshape(b * h * w, cin) @ wmat.T
    cols = prod.reshape(b, h, w, kh, kw, cout)
    out_data = _col2im(cols, stride, padding, out_h, out_w)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out_data = out_data + bias.data
        parents.append(bias)

    def backward(g):
        gcols = _im2col(g, kh, kw, stride, padding)  # (b, h, w, kh, kw, cout)
        gflat = gcols.reshape(b * h * w, kh * kw * cout)
        if x.requires_grad:
            x._accumulate((gflat @ wmat).reshape(x.shape))
        if weight.requires_grad:
            dw = gflat.T @ x.data.reshape(b * h * w, cin)
            weight._accumulate(dw.reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.reshape(-1, cout).sum(axis=0))

    return Tensor._from_op(out_data, tuple(parents), "conv_transpose2d", backward)


# ---------------------------------------------------------------------------
# sampling and gradient rerouting
# ---------------------------------------------------------------------------


def bilinear_sample(fmap, coords: np.ndarray, valid: np.ndarray | None = None) -> Tensor:
    """Border-clamped bilinear lookup.

    ``fmap`` is (V, H, W, C); ``coords`` (V, P, 2) holds (x, y) positions in
    feature-grid pixel units; ``valid`` (V, P) zeroes out samples flagged
    invalid.  Coordinates are treated as constants: gradients flow only into
    the feature map.
    """
    fmap = as_tensor(fmap)
    v, h, w, c = fmap.shape
    xs = np.clip(coords[..., 0], 0.0, w - 1.0)
    ys = np.clip(coords[..., 1], 0.0, h - 1.0)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, max(h - 2, 0))
    fx = (xs - x0).astype(fmap.dtype)[..., None]
    fy = (ys - y0).astype(fmap.dtype)[..., None]
    # flat row indices into (V*H*W, C) for fast gather/scatter
    base = (np.arange(v)[:, None] * h + y0) * w + x0
    flat = fmap.data.reshape(v * h * w, c)
    f00 = flat[base]
    f01 = flat[base + 1]
    f10 = flat[base + w]
    f11 = flat[base + w + 1]
    w00 = (1 - fy) * (1 - fx)
    w01 = (1 - fy) * fx
    w10 = fy * (1 - fx)
    w11 = fy * fx
    out_data = w00 * f00 + w01 * f01 + w10 * f10 + w11 * f11
    if valid is not None:
        mask = valid.astype(fmap.dtype)[..., None]
        out_data = out_data * mask
    else:
        mask = None

    def backward(g):
        if not fmap.requires_grad:
            return
        if mask is not None:
            g = g * mask
        df = np.zeros((v * h * w, c), dtype=fmap.dtype)
        rows = np.concatenate([(base + o).reshape(-1)
                               for o in (0, 1, w, w + 1)])
        contrib = np.concatenate([(g * wt).reshape(-1, c)
                                  for wt in (w00, w01, w10, w11)])
        np.add.at(df, rows, contrib)
        fmap._accumulate(df.reshape(fmap.shape))

    return Tensor._from_op(out_data, (fmap,), "bilinear_sample", backward)


def straight_through(forward_value: np.ndarray, carrier) -> Tensor:
    """Emit ``forward_value`` while routing gradients to ``carrier`` unchanged."""
    carrier = as_tensor(carrier)
    if np.shape(forward_value) != carrier.shape:
        raise ContractViolation(
            f"straight_through shapes differ: {np.shape(forward_value)} vs {carrier.shape}")

    def backward(g):
        if carrier.requires_grad:
            carrier._accumulate(g)

    return Tensor._from_op(np.asarray(forward_value, dtype=carrier.dtype),
                           (carrier,), "straight_through", backward)


def attention(q, k, v, mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product attention with an optional additive mask.

    ``q, k, v`` are (..., L, Dh); ``mask`` broadcasts against the (..., L, L)
    score matrix and uses ``-inf`` for disallowed pairs, which keeps masked
    positions exactly zero after the softmax.
    """
    dk = q.shape[-1]
    scores = matmul(q, transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)))
    scores = mul(scores, 1.0 / np.sqrt(dk))
    if mask is not None:
        scores = add(scores, Tensor(mask))
    return matmul(softmax(scores, axis=-1), v)
