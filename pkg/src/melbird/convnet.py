"""Inverted-bottleneck convolutional baseline (MBConv blocks).

Stem conv -> N MBConv blocks -> 1x1 head conv -> global average pool ->
sigmoid classifier. Each MBConv is a 1x1 expansion, a depthwise k x k conv
at the block stride, and a linear 1x1 projection, with per-channel
normalization and swish between stages and a residual skip when the block
keeps shape. Convolutions route through the selected kernel backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import tensor as T
from .dsp import SpectrogramImage
from .errors import ShapeMismatch, SizeMismatch
from .init import trunc_normal
from .tensor import Tensor, make_op


@dataclass(frozen=True)
class BlockSpec:
    expansion: int
    channels: int
    stride: int
    kernel_size: int

    def __post_init__(self):
        if self.stride not in (1, 2):
            raise ValueError(f"block stride must be 1 or 2, got {self.stride}")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ValueError(f"kernel size must be odd, got {self.kernel_size}")
        if self.expansion < 1 or self.channels < 1:
            raise ValueError("expansion and channels must be >= 1")


DEFAULT_BLOCKS = (
    BlockSpec(1, 16, 2, 3),
    BlockSpec(4, 24, 2, 3),
    BlockSpec(4, 32, 2, 5),
    BlockSpec(4, 48, 1, 3),
)


@dataclass(frozen=True)
class CnnConfig:
    num_classes: int
    stem_channels: int = 8
    blocks: tuple[BlockSpec, ...] = DEFAULT_BLOCKS
    head_channels: int = 96
    image_size: int = 224

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("need at least one block")
        if self.num_classes < 1 or self.stem_channels < 1 or self.head_channels < 1:
            raise ValueError("channel and class counts must be >= 1")


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1) -> Tensor:
    """SAME-padded cross-correlation: [C,H,W] x [O,C,kh,kw] -> [O,H',W']."""
    if x.data.ndim != 3 or kernel.data.ndim != 4 or x.shape[0] != kernel.shape[1]:
        raise ShapeMismatch(f"conv2d {x.shape} with kernel {kernel.shape}")
    _, h, w = x.shape
    _, _, kh, kw = kernel.shape

    def bw(g):
        return (
            kernels.conv2d_backward_input(g, kernel.data, stride, h, w),
            kernels.conv2d_backward_kernel(g, x.data, kh, kw, stride),
        )

    return make_op("conv2d", kernels.conv2d_forward(x.data, kernel.data, stride), (x, kernel), bw)


def depthwise_conv2d(x: Tensor, kernel: Tensor, stride: int = 1) -> Tensor:
    """Per-channel SAME-padded correlation: [C,H,W] x [C,kh,kw] -> [C,H',W']."""
    if x.data.ndim != 3 or kernel.data.ndim != 3 or x.shape[0] != kernel.shape[0]:
        raise ShapeMismatch(f"depthwise {x.shape} with kernel {kernel.shape}")
    _, h, w = x.shape
    _, kh, kw = kernel.shape

    def bw(g):
        return (
            kernels.depthwise_backward_input(g, kernel.data, stride, h, w),
            kernels.depthwise_backward_kernel(g, x.data, kh, kw, stride),
        )

    return make_op(
        "depthwise", kernels.depthwise_forward(x.data, kernel.data, stride), (x, kernel), bw
    )


def init_weights(cfg: CnnConfig, seed: int) -> dict[str, Tensor]:
    """Fan-scaled truncated normals throughout (convs by fan-in, classifier
    by fan average); norms start at identity."""
    rng = np.random.default_rng(seed)

    def conv_param(shape):
        fan_in = int(np.prod(shape[1:]))
        return Tensor(trunc_normal(rng, shape, np.sqrt(2.0 / fan_in)), requires_grad=True)

    def norm_params(prefix, channels, w):
        w[prefix + ".g"] = Tensor(np.ones(channels), requires_grad=True)
        w[prefix + ".b"] = Tensor(np.zeros(channels), requires_grad=True)

    w: dict[str, Tensor] = {"stem.k": conv_param((cfg.stem_channels, 1, 3, 3))}
    norm_params("stem", cfg.stem_channels, w)
    c_in = cfg.stem_channels
    for i, spec in enumerate(cfg.blocks):
        mid = spec.expansion * c_in
        pre = f"block{i}."
        w[pre + "expand.k"] = conv_param((mid, c_in, 1, 1))
        norm_params(pre + "expand", mid, w)
        dw = Tensor(
            trunc_normal(rng, (mid, spec.kernel_size, spec.kernel_size),
                         np.sqrt(2.0 / spec.kernel_size**2)),
            requires_grad=True,
        )
        w[pre + "dw.k"] = dw
        norm_params(pre + "dw", mid, w)
        w[pre + "project.k"] = conv_param((spec.channels, mid, 1, 1))
        norm_params(pre + "project", spec.channels, w)
        c_in = spec.channels
    w["head.k"] = conv_param((cfg.head_channels, c_in, 1, 1))
    fc_std = np.sqrt(2.0 / (cfg.head_channels + cfg.num_classes))
    w["fc.w"] = Tensor(trunc_normal(rng, (cfg.head_channels, cfg.num_classes), fc_std),
                       requires_grad=True)
    w["fc.b"] = Tensor(np.zeros(cfg.num_classes), requires_grad=True)
    return w


def mbconv_block(x: Tensor, weights: dict[str, Tensor], prefix: str, spec: BlockSpec) -> Tensor:
    """expand 1x1 -> depthwise kxk (stride) -> project 1x1, skip if shape kept."""
    h = conv2d(x, weights[prefix + "expand.k"], stride=1)
    h = T.silu(T.channel_norm(h, weights[prefix + "expand.g"], weights[prefix + "expand.b"]))
    h = depthwise_conv2d(h, weights[prefix + "dw.k"], stride=spec.stride)
    h = T.silu(T.channel_norm(h, weights[prefix + "dw.g"], weights[prefix + "dw.b"]))
    h = conv2d(h, weights[prefix + "project.k"], stride=1)
    h = T.channel_norm(h, weights[prefix + "project.g"], weights[prefix + "project.b"])
    if spec.stride == 1 and x.shape[0] == h.shape[0]:
        return T.add(x, h)
    return h


def forward(image, weights: dict[str, Tensor], cfg: CnnConfig) -> Tensor:
    """Image -> [1 x num_classes] independent class probabilities.

    No normalization after the head conv: the per-sample channel norm
    zero-means every map, and a zero-mean map averaged by the global pool
    hands the classifier almost nothing.
    """
    px = image.pixels if isinstance(image, SpectrogramImage) else np.asarray(image, dtype=np.float64)
    if px.shape != (cfg.image_size, cfg.image_size):
        raise SizeMismatch(f"image {px.shape}, expected {(cfg.image_size, cfg.image_size)}")
    x = Tensor(px[None, :, :])
    x = conv2d(x, weights["stem.k"], stride=2)
    x = T.silu(T.channel_norm(x, weights["stem.g"], weights["stem.b"]))
    for i, spec in enumerate(cfg.blocks):
        x = mbconv_block(x, weights, f"block{i}.", spec)
    x = T.silu(conv2d(x, weights["head.k"], stride=1))
    c = x.shape[0]
    pooled = T.reshape(T.mean(T.reshape(x, (c, -1)), axis=1), (1, c))
    return T.sigmoid(T.add_bias(T.matmul(pooled, weights["fc.w"]), weights["fc.b"]))
