"""Shared geometry for the convolution kernels (both backends)."""

from __future__ import annotations


def same_geometry(n: int, k: int, stride: int) -> tuple[int, int]:
    """(output size, leading pad) for SAME padding with ceil semantics.

    output = ceil(n / stride); total pad = max((output-1)*stride + k - n, 0),
    split with the smaller half leading.
    """
    out = -(-n // stride)
    total = max((out - 1) * stride + k - n, 0)
    return out, total // 2
