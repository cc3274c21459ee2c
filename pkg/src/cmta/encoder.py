"""Fine-grained temporal branch.

Per-frame visual/textual concatenation, linear projection into the model
dimension, a learnable positional embedding bound to the configured clip
length, a stack of post-norm self-attention encoder layers with ReLU
feed-forward blocks, and temporal mean pooling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .tensor import ShapeError, Tensor, concat, layer_norm


@dataclass
class EncoderLayerParams:
    w_q: Tensor  # [D, D]
    w_k: Tensor  # [D, D]
    w_v: Tensor  # [D, D]
    w_o: Tensor  # [D, D]
    w_1: Tensor  # [F, D]
    b_1: Tensor  # [F]
    w_2: Tensor  # [D, F]
    b_2: Tensor  # [D]
    ln1_scale: Tensor  # [D]
    ln1_shift: Tensor  # [D]
    ln2_scale: Tensor  # [D]
    ln2_shift: Tensor  # [D]

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        keys = ("w_q", "w_k", "w_v", "w_o", "w_1", "b_1", "w_2", "b_2",
                "ln1_scale", "ln1_shift", "ln2_scale", "ln2_shift")
        return [(f"{prefix}.{k}", getattr(self, k)) for k in keys]


@dataclass
class EncoderParams:
    w_p: Tensor  # [D, d_in] projection
    b_p: Tensor  # [D]
    pos: Tensor  # [T, D] learnable positional embedding
    layers: list[EncoderLayerParams]
    heads: int

    @property
    def model_dim(self) -> int:
        return self.w_p.shape[0]

    @property
    def clip_len(self) -> int:
        return self.pos.shape[0]

    def named(self, prefix: str = "enc") -> list[tuple[str, Tensor]]:
        out = [(f"{prefix}.w_p", self.w_p), (f"{prefix}.b_p", self.b_p),
               (f"{prefix}.pos", self.pos)]
        for i, layer in enumerate(self.layers):
            out.extend(layer.named(f"{prefix}.layer{i}"))
        return out


def fuse_frame(v_t: Tensor, e_t: Tensor) -> Tensor:
    """Channel-wise concatenation [v_t; e_t], visual first."""
    if v_t.shape[-1] == 0 or e_t.shape[-1] == 0:
        raise ShapeError("both modalities must be nonempty")
    return concat([v_t, e_t], axis=-1)


def embed_sequence(x: Tensor, params: EncoderParams) -> Tensor:
    """Project per-frame features [.., T, d_in] and add positions: [.., T, D]."""
    t = x.shape[-2]
    if t != params.clip_len:
        raise ShapeError(
            f"clip length {t} does not match positional embedding "
            f"length {params.clip_len}")
    return x @ params.w_p.transpose() + params.b_p + params.pos


def self_attention(u: Tensor, layer: EncoderLayerParams, heads: int) -> Tensor:
    """Multi-head scaled dot-product self-attention over [.., T, D]."""
    d = u.shape[-1]
    if d % heads:
        raise ShapeError(f"model dim {d} not divisible by {heads} heads")
    d_k = d // heads
    scale = 1.0 / math.sqrt(d_k)
    q, k, v = u @ layer.w_q, u @ layer.w_k, u @ layer.w_v
    outs = []
    for h in range(heads):
        sl = slice(h * d_k, (h + 1) * d_k)
        scores = (q[..., sl] @ k[..., sl].mT) * scale
        outs.append(scores.softmax(axis=-1) @ v[..., sl])
    return concat(outs, axis=-1) @ layer.w_o


def feed_forward(u: Tensor, layer: EncoderLayerParams) -> Tensor:
    return (u @ layer.w_1.transpose() + layer.b_1).relu() @ layer.w_2.transpose() + layer.b_2


def encoder_forward(u0: Tensor, params: EncoderParams) -> Tensor:
    """Post-norm residual encoder; L layers, identity when L == 0."""
    u = u0
    for layer in params.layers:
        u = layer_norm(u + self_attention(u, layer, params.heads),
                       layer.ln1_scale, layer.ln1_shift)
        u = layer_norm(u + feed_forward(u, layer),
                       layer.ln2_scale, layer.ln2_shift)
    return u


def temporal_pool(u: Tensor) -> Tensor:
    """Mean over the time axis: [.., T, D] -> [.., D]."""
    return u.mean(axis=-2)
