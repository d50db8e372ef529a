"""Neural-network primitives with exact analytic gradients.

Tensors are float64 numpy arrays in (N, C, H, W) layout. Every backward
function returns the gradient of a scalar loss with respect to its inputs;
all of them are checked against central finite differences in the tests.
"""

from __future__ import annotations

import numpy as np


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    n, c, h, w = x.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ValueError(f"kernel {kh}x{kw} does not fit input {h}x{w} with pad {pad}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            cols[:, :, ky, kx] = xp[
                :, :, ky : ky + stride * oh : stride, kx : kx + stride * ow : stride
            ]
    return cols.reshape(n, c * kh * kw, oh * ow), (oh, ow)


def conv2d_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 0
):
    """Cross-correlation with zero padding.

    x: (N, C, H, W); w: (F, C, KH, KW); b: (F,). Returns (out, cache).
    """
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ValueError(f"shape mismatch: x {x.shape}, w {w.shape}")
    if stride < 1 or pad < 0:
        raise ValueError(f"need stride >= 1 and pad >= 0, got {stride}, {pad}")
    n = x.shape[0]
    f, _, kh, kw = w.shape
    cols, (oh, ow) = _im2col(x, kh, kw, stride, pad)
    out = np.matmul(w.reshape(f, -1), cols).reshape(n, f, oh, ow)
    out += b[None, :, None, None]
    cache = (x.shape, cols, w, stride, pad)
    return out, cache


def conv2d_backward(grad_out: np.ndarray, cache):
    """Gradients for conv2d_forward: (grad_x, grad_w, grad_b)."""
    x_shape, cols, w, stride, pad = cache
    n, c, h, _w = x_shape
    f, _, kh, kw = w.shape
    oh, ow = grad_out.shape[2], grad_out.shape[3]
    go = grad_out.reshape(n, f, oh * ow)
    grad_b = go.sum(axis=(0, 2))
    grad_w = np.matmul(go, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    grad_cols = np.matmul(w.reshape(f, -1).T, go)
    grad_cols = grad_cols.reshape(n, c, kh, kw, oh, ow)
    gxp = np.zeros((n, c, h + 2 * pad, _w + 2 * pad), dtype=grad_out.dtype)
    for ky in range(kh):
        for kx in range(kw):
            gxp[:, :, ky : ky + stride * oh : stride, kx : kx + stride * ow : stride] += (
                grad_cols[:, :, ky, kx]
            )
    grad_x = gxp[:, :, pad : pad + h, pad : pad + _w] if pad else gxp
    return grad_x, grad_w, grad_b


def maxpool2x2(x: np.ndarray):
    """2x2 stride-2 max pooling; stores the first-encountered argmax per window."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2x2 requires even spatial dims, got {h}x{w}")
    windows = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2x2_backward(grad_out: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Routes each gradient to its window's stored argmax position."""
    n, c, oh, ow = grad_out.shape
    scattered = np.zeros((n, c, oh, ow, 4), dtype=grad_out.dtype)
    np.put_along_axis(scattered, idx[..., None], grad_out[..., None], axis=-1)
    return (
        scattered.reshape(n, c, oh, ow, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, oh * 2, ow * 2)
    )


def relu(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(grad_out: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return grad_out * mask


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """x: (N, D); w: (D, K); b: (K,)."""
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"shape mismatch: x {x.shape}, w {w.shape}")
    return x @ w + b, x


def dense_backward(grad_out: np.ndarray, x: np.ndarray, w: np.ndarray):
    return grad_out @ w.T, x.T @ grad_out, grad_out.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k}), got {labels.min()}..{labels.max()}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float((log_z - shifted[np.arange(n), labels]).mean())
    probs = softmax(logits)
    probs[np.arange(n), labels] -= 1.0
    return loss, probs / n
