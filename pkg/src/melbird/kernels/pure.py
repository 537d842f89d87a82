"""Numpy implementations of the convolution kernels.

Forward and kernel-gradient passes use strided window views plus einsum;
the input-gradient pass scatters per kernel tap. This is the fallback when
the compiled extension is unavailable, and the reference the extension is
tested against.
"""

from __future__ import annotations

import numpy as np

from .common import same_geometry


def _padded_windows(x: np.ndarray, kh: int, kw: int, stride: int):
    c, h, w = x.shape
    oh, pt = same_geometry(h, kh, stride)
    ow, pl = same_geometry(w, kw, stride)
    total_h = max((oh - 1) * stride + kh - h, 0)
    total_w = max((ow - 1) * stride + kw - w, 0)
    xp = np.pad(x, ((0, 0), (pt, total_h - pt), (pl, total_w - pl)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    return win[:, ::stride, ::stride][:, :oh, :ow], (oh, ow, pt, pl)


def conv2d_forward(x: np.ndarray, kernel: np.ndarray, stride: int) -> np.ndarray:
    """Cross-correlate [C,H,W] with [O,C,kh,kw] under SAME zero padding."""
    win, _ = _padded_windows(x, kernel.shape[2], kernel.shape[3], stride)
    return np.einsum("cijuv,ocuv->oij", win, kernel, optimize=True)


def conv2d_backward_input(
    gout: np.ndarray, kernel: np.ndarray, stride: int, in_h: int, in_w: int
) -> np.ndarray:
    _, c, kh, kw = kernel.shape
    oh, ow = gout.shape[1], gout.shape[2]
    _, pt = same_geometry(in_h, kh, stride)
    _, pl = same_geometry(in_w, kw, stride)
    hp = max((oh - 1) * stride + kh, in_h)
    wp = max((ow - 1) * stride + kw, in_w)
    gx = np.zeros((c, hp, wp))
    for u in range(kh):
        for v in range(kw):
            gx[:, u : u + stride * oh : stride, v : v + stride * ow : stride] += np.einsum(
                "oij,oc->cij", gout, kernel[:, :, u, v], optimize=True
            )
    return gx[:, pt : pt + in_h, pl : pl + in_w]


def conv2d_backward_kernel(
    gout: np.ndarray, x: np.ndarray, kh: int, kw: int, stride: int
) -> np.ndarray:
    win, _ = _padded_windows(x, kh, kw, stride)
    return np.einsum("oij,cijuv->ocuv", gout, win, optimize=True)


def depthwise_forward(x: np.ndarray, kernel: np.ndarray, stride: int) -> np.ndarray:
    """Per-channel correlation of [C,H,W] with [C,kh,kw], SAME padding."""
    win, _ = _padded_windows(x, kernel.shape[1], kernel.shape[2], stride)
    return np.einsum("cijuv,cuv->cij", win, kernel, optimize=True)


def depthwise_backward_input(
    gout: np.ndarray, kernel: np.ndarray, stride: int, in_h: int, in_w: int
) -> np.ndarray:
    c, kh, kw = kernel.shape
    oh, ow = gout.shape[1], gout.shape[2]
    _, pt = same_geometry(in_h, kh, stride)
    _, pl = same_geometry(in_w, kw, stride)
    hp = max((oh - 1) * stride + kh, in_h)
    wp = max((ow - 1) * stride + kw, in_w)
    gx = np.zeros((c, hp, wp))
    for u in range(kh):
        for v in range(kw):
            gx[:, u : u + stride * oh : stride, v : v + stride * ow : stride] += (
                gout * kernel[:, u, v][:, None, None]
            )
    return gx[:, pt : pt + in_h, pl : pl + in_w]


def depthwise_backward_kernel(
    gout: np.ndarray, x: np.ndarray, kh: int, kw: int, stride: int
) -> np.ndarray:
    win, _ = _padded_windows(x, kh, kw, stride)
    return np.einsum("cij,cijuv->cuv", gout, win, optimize=True)
