"""Convolution kernel backend selection.

Prefers the compiled Cython extension (built via ``python setup.py
build_ext --inplace``) and falls back to the numpy implementation in
``kernels.pure``. Set MELBIRD_KERNELS=pure or =compiled to force a choice;
forcing "compiled" when the extension is missing raises ImportError rather
than silently degrading.
"""

from __future__ import annotations

import os

import numpy as np

from . import pure

_FORCE = os.environ.get("MELBIRD_KERNELS", "").strip().lower()
if _FORCE not in ("", "pure", "compiled"):
    raise ValueError(f"MELBIRD_KERNELS must be 'pure' or 'compiled', got {_FORCE!r}")

if _FORCE == "pure":
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _ck as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _FORCE == "compiled":
            raise
        _impl = pure
        BACKEND = "pure"


def _c3(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


# 1x1 stride-1 convolutions are plain matrix products; they go straight to
# BLAS on either backend. The backends only see spatial or strided kernels.


def conv2d_forward(x, kernel, stride: int):
    x, kernel = _c3(x), _c3(kernel)
    o, c, kh, kw = kernel.shape
    if kh == 1 and kw == 1 and stride == 1:
        _, h, w = x.shape
        return (kernel.reshape(o, c) @ x.reshape(c, h * w)).reshape(o, h, w)
    return _impl.conv2d_forward(x, kernel, stride)


def conv2d_backward_input(gout, kernel, stride: int, in_h: int, in_w: int):
    gout, kernel = _c3(gout), _c3(kernel)
    o, c, kh, kw = kernel.shape
    if kh == 1 and kw == 1 and stride == 1:
        return (kernel.reshape(o, c).T @ gout.reshape(o, -1)).reshape(c, in_h, in_w)
    return _impl.conv2d_backward_input(gout, kernel, stride, in_h, in_w)


def conv2d_backward_kernel(gout, x, kh: int, kw: int, stride: int):
    gout, x = _c3(gout), _c3(x)
    if kh == 1 and kw == 1 and stride == 1:
        o, c = gout.shape[0], x.shape[0]
        return (gout.reshape(o, -1) @ x.reshape(c, -1).T).reshape(o, c, 1, 1)
    return _impl.conv2d_backward_kernel(gout, x, kh, kw, stride)


def depthwise_forward(x, kernel, stride: int):
    return _impl.depthwise_forward(_c3(x), _c3(kernel), stride)


def depthwise_backward_input(gout, kernel, stride: int, in_h: int, in_w: int):
    return _impl.depthwise_backward_input(_c3(gout), _c3(kernel), stride, in_h, in_w)


def depthwise_backward_kernel(gout, x, kh: int, kw: int, stride: int):
    return _impl.depthwise_backward_kernel(_c3(gout), _c3(x), kh, kw, stride)
