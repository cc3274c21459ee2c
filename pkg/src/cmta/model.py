"""Two-class head, binary cross-entropy, ablation variants, and the full model.

The head consumes a fused representation whose width depends on the variant:
the full model concatenates the recurrent state (coarse) with the pooled
encoder output (fine); single-branch and single-modality variants route
through one branch only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import encoder as enc
from .gru import GruParams, gru_forward
from .similarity import similarity_sequence
from .tensor import ShapeError, Tensor, concat

PROB_EPS = 1e-7


class Variant(enum.Enum):
    FULL = "full"
    V_ONLY = "v-only"
    T_ONLY = "t-only"
    VT_CGTM = "vt-cgtm"
    VT_FGTM = "vt-fgtm"

    @classmethod
    def parse(cls, name: str) -> "Variant":
        name = name.strip().lower().replace("_", "-")
        for v in cls:
            if v.value == name:
                return v
        raise ValueError(f"unknown variant {name!r}; expected one of "
                         f"{[v.value for v in cls]}")


@dataclass
class HeadParams:
    w: Tensor  # [2, D_f]
    b: Tensor  # [2]

    @property
    def in_dim(self) -> int:
        return self.w.shape[1]

    def named(self, prefix: str = "head") -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.w", self.w), (f"{prefix}.b", self.b)]


def fuse(h_coarse: Tensor, h_fine: Tensor) -> Tensor:
    """Concatenate the two branch representations, coarse first."""
    return concat([h_coarse, h_fine], axis=-1)


def classify(h: Tensor, params: HeadParams) -> Tensor:
    """Linear head + softmax: [.., D_f] -> probabilities [.., 2] (real, fake)."""
    if h.shape[-1] != params.in_dim:
        raise ShapeError(
            f"head expects width {params.in_dim}, got {h.shape[-1]}")
    return (h @ params.w.transpose() + params.b).softmax(axis=-1)


def bce_loss(p_fake: Tensor, labels: Tensor | np.ndarray) -> Tensor:
    """Mean binary cross-entropy on the fake-class probability."""
    if not isinstance(labels, Tensor):
        labels = Tensor(np.asarray(labels, dtype=float).reshape(p_fake.shape))
    p = p_fake.clamp(lo=PROB_EPS, hi=1.0 - PROB_EPS)
    return -(labels * p.log() + (1.0 - labels) * (1.0 - p).log()).mean()


def head_width(variant: Variant, hidden: int, model_dim: int) -> int:
    if variant == Variant.FULL:
        return hidden + model_dim
    if variant == Variant.VT_CGTM:
        return hidden
    return model_dim


def encoder_in_dim(variant: Variant, d_v: int, d_e: int) -> int:
    if variant == Variant.V_ONLY:
        return d_v
    if variant == Variant.T_ONLY:
        return d_e
    return d_v + d_e


@dataclass
class Model:
    variant: Variant
    gru: GruParams
    encoder: enc.EncoderParams
    head: HeadParams

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return self.gru.named() + self.encoder.named() + self.head.named()

    def _fine(self, visual: Tensor, textual: Tensor) -> Tensor:
        if self.variant == Variant.V_ONLY:
            x = visual
        elif self.variant == Variant.T_ONLY:
            x = textual
        else:
            x = enc.fuse_frame(visual, textual)
        u = enc.embed_sequence(x, self.encoder)
        return enc.temporal_pool(enc.encoder_forward(u, self.encoder))

    def _coarse(self, visual: Tensor, textual: Tensor) -> Tensor:
        return gru_forward(similarity_sequence(visual, textual), self.gru)

    def features(self, visual: Tensor, textual: Tensor) -> Tensor:
        """Pre-head representation for a batch [B, T, d] pair."""
        if self.variant == Variant.FULL:
            return fuse(self._coarse(visual, textual),
                        self._fine(visual, textual))
        if self.variant == Variant.VT_CGTM:
            return self._coarse(visual, textual)
        return self._fine(visual, textual)

    def forward(self, visual: Tensor, textual: Tensor) -> Tensor:
        """Class probabilities [B, 2] for a batch of embedding clips."""
        return classify(self.features(visual, textual), self.head)

    def loss(self, visual: Tensor, textual: Tensor,
             labels: np.ndarray) -> Tensor:
        probs = self.forward(visual, textual)
        return bce_loss(probs[..., 1:2], np.asarray(labels).reshape(-1, 1))
