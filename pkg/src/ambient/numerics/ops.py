"""Forward ops and their vector-Jacobian products.

Every op is pure on Tensor values.  If any input is attached to a
DiffGraph the result joins that graph and one tape entry is recorded;
detached inputs behave as constants.  Channels live on the last axis
throughout; normalizers use biased (1/N) variance.
"""

from __future__ import annotations

import numpy as np

from ambient.errors import ShapeError
from ambient.numerics.tensor import DiffGraph, Tensor


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _graph_of(*tensors) -> DiffGraph | None:
    graph = None
    for t in tensors:
        if t.graph is None:
            continue
        if graph is None:
            graph = t.graph
        elif graph is not t.graph:
            raise ValueError("inputs belong to different DiffGraphs")
    return graph


def _emit(arr: np.ndarray, *inputs: Tensor):
    graph = _graph_of(*inputs)
    out = Tensor._wrap(arr, graph=graph)
    return out, graph


def _sum_to(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Collapse leading broadcast axes so grad matches `shape`."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    return grad


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    """Elementwise sum; b may broadcast over leading axes of a (bias add)."""
    a, b = _t(a), _t(b)
    if a.shape[len(a.shape) - len(b.shape):] != b.shape:
        raise ShapeError(f"add: cannot broadcast {b.shape} onto {a.shape}")
    out, graph = _emit(a.data + b.data, a, b)
    if graph is not None:
        graph.record((a, b), out, lambda g: (g, _sum_to(g, b.shape)))
    return out


def mul(a, b) -> Tensor:
    """Elementwise product with the same broadcast rule as add."""
    a, b = _t(a), _t(b)
    if a.shape[len(a.shape) - len(b.shape):] != b.shape:
        raise ShapeError(f"mul: cannot broadcast {b.shape} onto {a.shape}")
    out, graph = _emit(a.data * b.data, a, b)
    if graph is not None:
        ad, bd = a.data, b.data
        graph.record((a, b), out, lambda g: (g * bd, _sum_to(g * ad, b.shape)))
    return out


def scale(a, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    a = _t(a)
    c = float(c)
    out, graph = _emit(a.data * c, a)
    if graph is not None:
        graph.record((a,), out, lambda g: (g * c,))
    return out


def matmul(a, b) -> Tensor:
    """Matrix product: 2-D x 2-D, batched x 2-D, or batched x batched."""
    a, b = _t(a), _t(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} x {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul batch dims disagree: {a.shape} x {b.shape}")
    out, graph = _emit(a.data @ b.data, a, b)
    if graph is not None:
        ad, bd = a.data, b.data

        def vjp(g):
            ga = g @ np.swapaxes(bd, -1, -2)
            if bd.ndim == 2 and ad.ndim > 2:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.swapaxes(ad, -1, -2) @ g
            return ga, gb

        graph.record((a, b), out, vjp)
    return out


def reshape(a, shape) -> Tensor:
    a = _t(a)
    old = a.shape
    out, graph = _emit(a.data.reshape(shape), a)
    if graph is not None:
        graph.record((a,), out, lambda g: (g.reshape(old),))
    return out


def permute(a, axes) -> Tensor:
    a = _t(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out, graph = _emit(np.transpose(a.data, axes), a)
    if graph is not None:
        graph.record((a,), out, lambda g: (np.transpose(g, inverse),))
    return out


def rows(a, n: int) -> Tensor:
    """First n rows along axis 0 (positional-table lookup)."""
    a = _t(a)
    if not 0 < n <= a.shape[0]:
        raise ShapeError(f"rows: n={n} out of range for shape {a.shape}")
    full = a.shape
    out, graph = _emit(a.data[:n], a)
    if graph is not None:

        def vjp(g):
            ga = np.zeros(full, dtype=np.float64)
            ga[:n] = g
            return (ga,)

        graph.record((a,), out, vjp)
    return out


def sum_all(a) -> Tensor:
    a = _t(a)
    shape = a.shape
    out, graph = _emit(np.asarray(a.data.sum()), a)
    if graph is not None:
        graph.record((a,), out, lambda g: (np.broadcast_to(g, shape).astype(np.float64),))
    return out


def mean_pool(a, axis: int = 1) -> Tensor:
    """Mean over one axis (time pooling before the classifier head)."""
    a = _t(a)
    axis = axis % a.ndim
    n = a.shape[axis]
    out, graph = _emit(a.data.mean(axis=axis), a)
    if graph is not None:

        def vjp(g):
            return (np.repeat(np.expand_dims(g, axis), n, axis=axis) / n,)

        graph.record((a,), out, vjp)
    return out


# ---------------------------------------------------------------------------
# activations


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def swish(a) -> Tensor:
    """x * sigmoid(x)."""
    a = _t(a)
    s = _sigmoid(a.data)
    out, graph = _emit(a.data * s, a)
    if graph is not None:
        ad = a.data
        graph.record((a,), out, lambda g: (g * (s + ad * s * (1.0 - s)),))
    return out


def glu(a, axis: int = -1) -> Tensor:
    """Gated linear unit: split in half on `axis`, first * sigmoid(second)."""
    a = _t(a)
    axis = axis % a.ndim
    if a.shape[axis] % 2:
        raise ShapeError(f"glu: axis {axis} of {a.shape} not even")
    half = a.shape[axis] // 2
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis] = slice(0, half)
    hi[axis] = slice(half, None)
    left, gate = a.data[tuple(lo)], a.data[tuple(hi)]
    s = _sigmoid(gate)
    out, graph = _emit(left * s, a)
    if graph is not None:

        def vjp(g):
            ga = np.concatenate([g * s, g * left * s * (1.0 - s)], axis=axis)
            return (ga,)

        graph.record((a,), out, vjp)
    return out


def softmax(a, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along `axis`."""
    a = _t(a)
    axis = axis % a.ndim
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out, graph = _emit(y, a)
    if graph is not None:

        def vjp(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            return (y * (g - dot),)

        graph.record((a,), out, vjp)
    return out


# ---------------------------------------------------------------------------
# convolution


def conv1d_depthwise(x, kernel) -> Tensor:
    """Per-channel 1-D correlation over the time axis, same-padded with zeros.

    x: [..., T, C], kernel: [K, C] with K odd.  No channel mixing.
    """
    x, kernel = _t(x), _t(kernel)
    if kernel.ndim != 2:
        raise ShapeError(f"depthwise kernel must be [K, C], got {kernel.shape}")
    k, c = kernel.shape
    if k % 2 == 0:
        raise ShapeError(f"depthwise kernel length must be odd, got {k}")
    if x.ndim < 2 or x.shape[-1] != c:
        raise ShapeError(f"conv1d_depthwise: x {x.shape} vs kernel {kernel.shape}")
    t = x.shape[-2]
    pad = k // 2

    def corr(src: np.ndarray, w: np.ndarray) -> np.ndarray:
        width = [(0, 0)] * (src.ndim - 2) + [(pad, pad), (0, 0)]
        padded = np.pad(src, width)
        acc = np.zeros_like(src)
        for j in range(k):
            acc += padded[..., j:j + t, :] * w[j]
        return acc

    out, graph = _emit(corr(x.data, kernel.data), x, kernel)
    if graph is not None:
        xd, wd = x.data, kernel.data

        def vjp(g):
            gx = corr(g, wd[::-1])
            width = [(0, 0)] * (xd.ndim - 2) + [(pad, pad), (0, 0)]
            xpad = np.pad(xd, width)
            flat_axes = tuple(range(g.ndim - 1))
            gw = np.stack(
                [(g * xpad[..., j:j + t, :]).sum(axis=flat_axes) for j in range(k)]
            )
            return gx, gw

        graph.record((x, kernel), out, vjp)
    return out


# ---------------------------------------------------------------------------
# normalizers


def _cell_norm_backward(dxhat, xhat, inv_sigma, axes):
    m1 = dxhat.mean(axis=axes, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=axes, keepdims=True)
    return (dxhat - m1 - xhat * m2) * inv_sigma


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the channel axis per position, then affine."""
    x, gamma, beta = _t(x), _t(gamma), _t(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm affine shapes {gamma.shape}/{beta.shape} vs C={c}")
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_sigma = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_sigma
    out, graph = _emit(xhat * gamma.data + beta.data, x, gamma, beta)
    if graph is not None:
        gd = gamma.data
        lead = tuple(range(x.ndim - 1))

        def vjp(g):
            dgamma = (g * xhat).sum(axis=lead)
            dbeta = g.sum(axis=lead)
            dx = _cell_norm_backward(g * gd, xhat, inv_sigma, axes=(-1,))
            return dx, dgamma, dbeta

        graph.record((x, gamma, beta), out, vjp)
    return out


def group_norm(x, gamma, beta, groups: int, eps: float = 1e-5) -> Tensor:
    """Normalize channel groups independently at every position.

    Statistics are taken over the C/groups channels of each group, per
    position; groups == C degenerates to per-channel instance norm.
    """
    x, gamma, beta = _t(x), _t(gamma), _t(beta)
    c = x.shape[-1]
    if c % groups:
        raise ShapeError(f"group_norm: C={c} not divisible by groups={groups}")
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"group_norm affine shapes {gamma.shape}/{beta.shape} vs C={c}")
    cell = x.shape[:-1] + (groups, c // groups)
    xg = x.data.reshape(cell)
    mean = xg.mean(axis=-1, keepdims=True)
    var = xg.var(axis=-1, keepdims=True)
    inv_sigma = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mean) * inv_sigma).reshape(x.shape)
    out, graph = _emit(xhat * gamma.data + beta.data, x, gamma, beta)
    if graph is not None:
        gd = gamma.data
        lead = tuple(range(x.ndim - 1))

        def vjp(g):
            dgamma = (g * xhat).sum(axis=lead)
            dbeta = g.sum(axis=lead)
            dx = _cell_norm_backward(
                (g * gd).reshape(cell), xhat.reshape(cell), inv_sigma, axes=(-1,)
            )
            return dx.reshape(x.shape), dgamma, dbeta

        graph.record((x, gamma, beta), out, vjp)
    return out


def batch_norm_train(x, gamma, beta, eps: float = 1e-5):
    """Normalize each channel by batch statistics.

    Returns (out, batch_mean, batch_var); the caller folds the stats
    into its running buffers.  Requires a leading batch of >= 2.
    """
    x, gamma, beta = _t(x), _t(gamma), _t(beta)
    if x.ndim < 2 or x.shape[0] < 2:
        raise ShapeError(f"batch_norm train mode needs batch >= 2, got shape {x.shape}")
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batch_norm affine shapes {gamma.shape}/{beta.shape} vs C={c}")
    axes = tuple(range(x.ndim - 1))
    mean = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    inv_sigma = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_sigma
    out, graph = _emit(xhat * gamma.data + beta.data, x, gamma, beta)
    if graph is not None:
        gd = gamma.data

        def vjp(g):
            dgamma = (g * xhat).sum(axis=axes)
            dbeta = g.sum(axis=axes)
            dx = _cell_norm_backward(g * gd, xhat, inv_sigma, axes=axes)
            return dx, dgamma, dbeta

        graph.record((x, gamma, beta), out, vjp)
    return out, mean, var


def batch_norm_eval(x, gamma, beta, running_mean, running_var, eps: float = 1e-5) -> Tensor:
    """Normalize by fixed running statistics (constants on the graph)."""
    x, gamma, beta = _t(x), _t(gamma), _t(beta)
    rm = np.asarray(running_mean, dtype=np.float64)
    rv = np.asarray(running_var, dtype=np.float64)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,) or rm.shape != (c,) or rv.shape != (c,):
        raise ShapeError(f"batch_norm_eval shapes disagree with C={c}")
    inv_sigma = 1.0 / np.sqrt(rv + eps)
    xhat = (x.data - rm) * inv_sigma
    out, graph = _emit(xhat * gamma.data + beta.data, x, gamma, beta)
    if graph is not None:
        gd = gamma.data
        lead = tuple(range(x.ndim - 1))

        def vjp(g):
            return g * gd * inv_sigma, (g * xhat).sum(axis=lead), g.sum(axis=lead)

        graph.record((x, gamma, beta), out, vjp)
    return out


def batch_norm(x, gamma, beta, running_mean, running_var, mode: str,
               momentum: float = 0.1, eps: float = 1e-5):
    """Dispatch on mode; returns (out, new_mean, new_var).

    Train mode folds batch stats into the running buffers with
    new = (1 - momentum) * old + momentum * batch, so momentum=1.0
    makes the buffers equal the last batch exactly.  Eval mode leaves
    the buffers untouched.
    """
    if mode == "train":
        out, bm, bv = batch_norm_train(x, gamma, beta, eps=eps)
        rm = np.asarray(running_mean, dtype=np.float64)
        rv = np.asarray(running_var, dtype=np.float64)
        if momentum == 1.0:
            return out, bm, bv
        return out, (1.0 - momentum) * rm + momentum * bm, (1.0 - momentum) * rv + momentum * bv
    if mode == "eval":
        out = batch_norm_eval(x, gamma, beta, running_mean, running_var, eps=eps)
        return out, np.asarray(running_mean, dtype=np.float64), np.asarray(running_var, dtype=np.float64)
    raise ValueError(f"batch_norm mode must be 'train' or 'eval', got {mode!r}")


# ---------------------------------------------------------------------------
# loss


def cross_entropy(logits, labels) -> Tensor:
    """Mean softmax cross-entropy; logits [B, K], integer labels [B]."""
    logits = _t(logits)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects [B, K] logits, got {logits.shape}")
    y = np.asarray(labels)
    if y.shape != (logits.shape[0],):
        raise ShapeError(f"labels shape {y.shape} vs logits {logits.shape}")
    k = logits.shape[1]
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"label out of range [0, {k}): {int(y.min())}..{int(y.max())}")
    b = logits.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + logits.data.max(axis=1)
    picked = logits.data[np.arange(b), y]
    out, graph = _emit(np.asarray((lse - picked).mean()), logits)
    if graph is not None:
        e = np.exp(shifted)
        probs = e / e.sum(axis=1, keepdims=True)

        def vjp(g):
            d = probs.copy()
            d[np.arange(b), y] -= 1.0
            return (d * (g / b),)

        graph.record((logits,), out, vjp)
    return out
