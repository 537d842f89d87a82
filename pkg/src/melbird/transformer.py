"""Spectrogram transformer: overlapping patches, CLS token, encoder stack.

The image is cut into (possibly overlapping) square patches, each patch is
linearly projected to a token, a learnable CLS token is prepended, learnable
positions are added, and a stack of pre-norm attention blocks runs before a
sigmoid head reads the CLS state. Multi-label by construction: every class
probability is independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .dsp import SpectrogramImage
from .errors import SizeMismatch
from .init import trunc_normal
from .tensor import Tensor


@dataclass(frozen=True)
class AstConfig:
    num_classes: int
    patch_size: int = 16
    patch_stride: int = 10
    embed_dim: int = 768
    n_layers: int = 12
    n_heads: int = 12
    mlp_ratio: int = 4
    image_size: int = 224
    init_scheme: str = "fixed"

    def __post_init__(self):
        if self.embed_dim % self.n_heads:
            raise ValueError("embed_dim must be divisible by n_heads")
        if not 0 < self.patch_stride <= self.patch_size:
            raise ValueError("need 0 < patch_stride <= patch_size")
        if self.tokens_per_axis < 1:
            raise ValueError("image too small for one patch")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.init_scheme not in ("fixed", "xavier"):
            raise ValueError(f"init_scheme must be 'fixed' or 'xavier', got {self.init_scheme!r}")

    @property
    def tokens_per_axis(self) -> int:
        return (self.image_size - self.patch_size) // self.patch_stride + 1

    @property
    def n_patches(self) -> int:
        return self.tokens_per_axis**2

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.n_heads


def patchify(image, cfg: AstConfig) -> Tensor:
    """Flatten overlapping patches row-major: [n_patches x patch_size^2]."""
    px = image.pixels if isinstance(image, SpectrogramImage) else np.asarray(image, dtype=np.float64)
    if px.shape != (cfg.image_size, cfg.image_size):
        raise SizeMismatch(f"image {px.shape}, expected {(cfg.image_size, cfg.image_size)}")
    p, s = cfg.patch_size, cfg.patch_stride
    win = np.lib.stride_tricks.sliding_window_view(px, (p, p))[::s, ::s]
    t = cfg.tokens_per_axis
    return Tensor(win[:t, :t].reshape(cfg.n_patches, p * p))


def init_weights(cfg: AstConfig, seed: int) -> dict[str, Tensor]:
    """Seeded random weights: zero biases and CLS, std-0.02 positions.

    Projections follow cfg.init_scheme: "fixed" is truncated normal with
    std 0.02 (the convention of the large pretrained models this mirrors);
    "xavier" scales each matrix by fan-in/fan-out, which is what actually
    trains from scratch at micro scale — with std 0.02 a small model's
    input pathway is attenuated below its bias gradients and training
    plateaus at the label base rate.
    """
    rng = np.random.default_rng(seed)

    def param(arr):
        return Tensor(arr, requires_grad=True)

    def projection(shape):
        if cfg.init_scheme == "xavier":
            std = np.sqrt(2.0 / (shape[0] + shape[1]))
        else:
            std = 0.02
        return param(trunc_normal(rng, shape, std))

    d, p = cfg.embed_dim, cfg.patch_size
    w: dict[str, Tensor] = {
        "patch.w": projection((p * p, d)),
        "patch.b": param(np.zeros(d)),
        "cls": param(np.zeros((1, d))),
        "pos": param(trunc_normal(rng, (cfg.n_patches + 1, d), 0.02)),
        "head.w": projection((d, cfg.num_classes)),
        "head.b": param(np.zeros(cfg.num_classes)),
    }
    hidden = cfg.mlp_ratio * d
    for i in range(cfg.n_layers):
        pre = f"layer{i}."
        w[pre + "ln1.g"] = param(np.ones(d))
        w[pre + "ln1.b"] = param(np.zeros(d))
        for name in ("q", "k", "v", "o"):
            w[pre + f"attn.w{name}"] = projection((d, d))
            w[pre + f"attn.b{name}"] = param(np.zeros(d))
        w[pre + "ln2.g"] = param(np.ones(d))
        w[pre + "ln2.b"] = param(np.zeros(d))
        w[pre + "mlp.w1"] = projection((d, hidden))
        w[pre + "mlp.b1"] = param(np.zeros(hidden))
        w[pre + "mlp.w2"] = projection((hidden, d))
        w[pre + "mlp.b2"] = param(np.zeros(d))
    return w


def embed(patches: Tensor, weights: dict[str, Tensor], cfg: AstConfig) -> Tensor:
    """Project patches, prepend CLS at index 0, add positional embeddings."""
    proj = T.add_bias(T.matmul(patches, weights["patch.w"]), weights["patch.b"])
    tokens = T.concat([weights["cls"], proj], axis=0)
    if tokens.shape[0] != weights["pos"].shape[0]:
        raise SizeMismatch(
            f"{tokens.shape[0]} tokens vs positional table {weights['pos'].shape[0]}"
        )
    return T.add(tokens, weights["pos"])


def _attention(x: Tensor, weights, pre: str, cfg: AstConfig, attn_probs) -> Tensor:
    q = T.add_bias(T.matmul(x, weights[pre + "attn.wq"]), weights[pre + "attn.bq"])
    k = T.add_bias(T.matmul(x, weights[pre + "attn.wk"]), weights[pre + "attn.bk"])
    v = T.add_bias(T.matmul(x, weights[pre + "attn.wv"]), weights[pre + "attn.bv"])
    dh = cfg.head_dim
    heads = []
    for h in range(cfg.n_heads):
        cols = slice(h * dh, (h + 1) * dh)
        scores = T.scale(T.matmul(q[:, cols], T.transpose(k[:, cols])), 1.0 / math.sqrt(dh))
        probs = T.softmax(scores, axis=-1)
        if attn_probs is not None:
            attn_probs.append(probs.data.copy())
        heads.append(T.matmul(probs, v[:, cols]))
    ctx = T.concat(heads, axis=1)
    return T.add_bias(T.matmul(ctx, weights[pre + "attn.wo"]), weights[pre + "attn.bo"])


def encoder_forward(
    tokens: Tensor,
    weights: dict[str, Tensor],
    cfg: AstConfig,
    attn_probs: list | None = None,
) -> Tensor:
    """Pre-norm encoder: x += MHA(LN(x)); x += MLP(LN(x)), n_layers times.

    Pass a list as attn_probs to collect every layer/head attention matrix
    (numpy copies, rows summing to 1).
    """
    x = tokens
    for i in range(cfg.n_layers):
        pre = f"layer{i}."
        normed = T.layer_norm(x, weights[pre + "ln1.g"], weights[pre + "ln1.b"])
        x = T.add(x, _attention(normed, weights, pre, cfg, attn_probs))
        normed = T.layer_norm(x, weights[pre + "ln2.g"], weights[pre + "ln2.b"])
        h = T.gelu(T.add_bias(T.matmul(normed, weights[pre + "mlp.w1"]), weights[pre + "mlp.b1"]))
        h = T.add_bias(T.matmul(h, weights[pre + "mlp.w2"]), weights[pre + "mlp.b2"])
        x = T.add(x, h)
    return x


def classify(tokens: Tensor, weights: dict[str, Tensor], cfg: AstConfig) -> Tensor:
    """Sigmoid head over the CLS state: [1 x num_classes] of probabilities."""
    cls_state = tokens[0:1, :]
    return T.sigmoid(T.add_bias(T.matmul(cls_state, weights["head.w"]), weights["head.b"]))


def forward(image, weights: dict[str, Tensor], cfg: AstConfig, attn_probs=None) -> Tensor:
    """Full model: image -> [1 x num_classes] independent probabilities."""
    tokens = embed(patchify(image, cfg), weights, cfg)
    return classify(encoder_forward(tokens, weights, cfg, attn_probs), weights, cfg)
