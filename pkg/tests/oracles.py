"""Independent oracles used across the test suite.

These deliberately avoid the library's backward path: gradients come
from central finite differences on forward values, and reference
statistics come from scalar loops.
"""

import numpy as np

from ambient.numerics.tensor import Tensor


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d f / d x for scalar-valued f, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max |a - n| / max(|a|, |n|, floor), the usual gradcheck metric."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def scalar_group_norm(x: np.ndarray, groups: int, eps: float = 1e-5) -> np.ndarray:
    """Loop-based group norm (pre-affine) for [T, C] input."""
    t, c = x.shape
    s = c // groups
    out = np.zeros_like(x)
    for ti in range(t):
        for g in range(groups):
            sl = x[ti, g * s:(g + 1) * s]
            mu = sum(sl) / s
            var = sum((v - mu) ** 2 for v in sl) / s
            out[ti, g * s:(g + 1) * s] = (sl - mu) / np.sqrt(var + eps)
    return out


def scalar_batch_stats(x: np.ndarray):
    """Per-channel mean/biased variance of [N, C] via python loops."""
    n, c = x.shape
    mean = np.zeros(c)
    var = np.zeros(c)
    for j in range(c):
        col = [x[i, j] for i in range(n)]
        mean[j] = sum(col) / n
        var[j] = sum((v - mean[j]) ** 2 for v in col) / n
    return mean, var


def tensors_equal(a: Tensor, b: Tensor) -> bool:
    return a.shape == b.shape and np.array_equal(a.data, b.data)
