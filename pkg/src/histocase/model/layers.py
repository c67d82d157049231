"""Layer primitives with analytic gradients.

All functions operate on float64 channels-last (NHWC) arrays and come in
forward/backward pairs; forwards return a cache consumed by the matching
backward.  Convolutions are lowered via im2col so each one is a single
matrix product, with patch extraction done as kh*kw contiguous slice
copies (the channel axis stays innermost throughout).
"""

from __future__ import annotations

import numpy as np


def conv_out_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def conv2d_forward(x, w, b=None, stride=1, pad=0):
    """x (N,H,W,C), w (kh,kw,C,F), optional b (F,) -> y (N,oh,ow,F).

    Lowered to one (M, C) x (C, F) product per kernel position, where each
    position's input panel is a contiguous copy of the shifted image; the
    panels are cached so the backward pass reuses them for the weight
    gradient.
    """
    n, h, wd, c = x.shape
    kh, kw, _, f = w.shape
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(wd, kw, stride, pad)
    if pad:
        x_pad = np.zeros((n, h + 2 * pad, wd + 2 * pad, c), dtype=x.dtype)
        x_pad[:, pad:-pad, pad:-pad, :] = x
    else:
        x_pad = x
    m = n * oh * ow
    panels = np.empty((kh * kw, m, c), dtype=x.dtype)
    y = np.zeros((m, f), dtype=x.dtype)
    for a in range(kh):
        for bb in range(kw):
            panel = panels[a * kw + bb]
            panel[:] = x_pad[:, a : a + stride * oh : stride,
                             bb : bb + stride * ow : stride, :].reshape(m, c)
            y += panel @ w[a, bb]
    if b is not None:
        y += b
    cache = (x.shape, w, b is not None, stride, pad, oh, ow, panels)
    return y.reshape(n, oh, ow, f), cache


def conv2d_backward(dy, cache):
    x_shape, w, has_bias, stride, pad, oh, ow, panels = cache
    n, h, wd, c = x_shape
    kh, kw, _, f = w.shape
    m = n * oh * ow
    dy_2d = dy.reshape(m, f)
    db = dy_2d.sum(axis=0) if has_bias else None
    dw = np.empty_like(w)
    dx_pad = np.zeros((n, h + 2 * pad, wd + 2 * pad, c), dtype=dy.dtype)
    for a in range(kh):
        for bb in range(kw):
            panel = panels[a * kw + bb]
            dw[a, bb] = panel.T @ dy_2d
            g = dy_2d @ w[a, bb].T
            dx_pad[:, a : a + stride * oh : stride,
                   bb : bb + stride * ow : stride, :] += g.reshape(n, oh, ow, c)
    dx = dx_pad[:, pad:-pad, pad:-pad, :] if pad else dx_pad
    return dx, dw, db


def batchnorm_forward(x, gamma, beta, running_mean, running_var,
                      mode, eps=1e-5, momentum=0.9):
    """Per-channel batch normalization over (N, H, W).

    Train mode normalizes with biased batch statistics and returns updated
    running statistics (``momentum`` is the fraction of the old running
    value kept); eval mode normalizes with the running statistics and
    leaves them untouched.
    """
    if mode == "train":
        mu = x.mean(axis=(0, 1, 2))
        var = x.var(axis=(0, 1, 2))
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu) * inv_std
        new_mean = momentum * running_mean + (1.0 - momentum) * mu
        new_var = momentum * running_var + (1.0 - momentum) * var
        cache = (xhat, gamma, inv_std)
    elif mode == "eval":
        inv_std = 1.0 / np.sqrt(running_var + eps)
        xhat = (x - running_mean) * inv_std
        new_mean, new_var = running_mean, running_var
        cache = None
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    y = gamma * xhat + beta
    return y, cache, new_mean, new_var


def batchnorm_backward(dy, cache):
    """Backward through a train-mode batchnorm."""
    xhat, gamma, inv_std = cache
    m = dy.shape[0] * dy.shape[1] * dy.shape[2]
    dgamma = (dy * xhat).sum(axis=(0, 1, 2))
    dbeta = dy.sum(axis=(0, 1, 2))
    dxhat = dy * gamma
    sum_dxhat = dxhat.sum(axis=(0, 1, 2))
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 1, 2))
    dx = (inv_std / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
    return dx, dgamma, dbeta


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy, mask):
    return dy * mask


def global_avg_pool_forward(x):
    """(N,H,W,C) -> (N,C); backward spreads gradient uniformly."""
    return x.mean(axis=(1, 2)), x.shape


def global_avg_pool_backward(dy, x_shape):
    n, h, w, c = x_shape
    return np.broadcast_to(dy[:, None, None, :], x_shape) / (h * w)


def dense_forward(x, w, b):
    """x (N,D) @ w (D,K) + b (K,)."""
    return x @ w + b, (x, w)


def dense_backward(dy, cache):
    x, w = cache
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits.

    ``labels`` are integer class indices of shape (N,).
    """
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted[np.arange(n), labels] - log_z
    loss = -log_probs.mean()
    dlogits = softmax(logits)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits
