"""Layer normalization and 1D convolution with analytic backward passes."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, result

LAYER_NORM_EPS = 1e-5


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, axis: int = -1,
               eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize ``x`` over ``axis`` then apply a per-feature gain and bias."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    axis = axis % x.ndim
    f = x.shape[axis]
    if gain.shape != (f,) or bias.shape != (f,):
        raise ShapeError(f"layer_norm: feature size {f}, gain {gain.shape}, bias {bias.shape}")
    bshape = [1] * x.ndim
    bshape[axis] = f
    g_b = gain.data.reshape(bshape)

    mu = x.data.mean(axis=axis, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=axis, keepdims=True) + eps)
    xhat = centered * inv_std
    out = xhat * g_b + bias.data.reshape(bshape)
    other = tuple(a for a in range(x.ndim) if a != axis)

    def grad_fn(g):
        dxhat = g * g_b
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=axis, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=axis, keepdims=True)
        )
        dgain = (g * xhat).sum(axis=other)
        dbias = g.sum(axis=other)
        return dx, dgain, dbias

    return result(out, (x, gain, bias), grad_fn)


def conv_output_length(t: int, kernel: int, stride: int, padding: int) -> int:
    return (t + 2 * padding - kernel) // stride + 1


def conv1d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate ``x`` (``[B,] C_in x T``) with ``kernel`` (``C_out x C_in x k``).

    Zero padding is applied on both ends of the time axis.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if stride not in (1, 2):
        raise ShapeError(f"conv1d: stride must be 1 or 2, got {stride}")
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or kernel.ndim != 3 or kernel.shape[1] != xd.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernel {kernel.shape}")
    k = kernel.shape[2]
    t_in = xd.shape[2]
    t_out = conv_output_length(t_in, k, stride, padding)
    if t_out < 1:
        raise ShapeError(f"conv1d: output length {t_out} < 1 for input length {t_in}")

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding)))
    starts = stride * np.arange(t_out)
    # cols: B x T' x (C_in * k), ordered to match kernel.reshape(C_out, C_in * k)
    cols = np.stack([xp[:, :, starts + j] for j in range(k)], axis=-1)
    cols = cols.transpose(0, 2, 1, 3).reshape(xd.shape[0], t_out, -1)
    wmat = kernel.data.reshape(kernel.shape[0], -1)
    out = (cols @ wmat.T).transpose(0, 2, 1)

    def grad_fn(g):
        gd = g[None] if squeeze else g
        gt = gd.transpose(0, 2, 1)  # B x T' x C_out
        dw = np.einsum("bto,btc->oc", gt, cols).reshape(kernel.shape)
        dcols = (gt @ wmat).reshape(xd.shape[0], t_out, xd.shape[1], k)
        dxp = np.zeros_like(xp)
        for j in range(k):
            dxp[:, :, starts + j] += dcols[:, :, :, j].transpose(0, 2, 1)
        dx = dxp[:, :, padding:padding + t_in]
        return (dx[0] if squeeze else dx), dw

    return result(out[0] if squeeze else out, (x, kernel), grad_fn)
