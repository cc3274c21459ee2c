"""Frame-wise cross-modal cosine similarity and the per-clip sequence."""

from __future__ import annotations

from .tensor import ShapeError, Tensor

NORM_EPS = 1e-8


def cosine(v: Tensor, e: Tensor) -> Tensor:
    """Cosine similarity over the last axis, with epsilon-guarded norms.

    Degenerate (near-zero) vectors yield 0 rather than NaN. Differentiable
    with respect to both inputs when they are marked trainable.
    """
    if v.shape[-1] != e.shape[-1]:
        raise ShapeError(
            f"cosine dimensions differ: visual {v.shape[-1]}, textual {e.shape[-1]}")
    dot = (v * e).sum(axis=-1, keepdims=True)
    nv = ((v * v).sum(axis=-1, keepdims=True) ** 0.5).clamp(lo=NORM_EPS)
    ne = ((e * e).sum(axis=-1, keepdims=True) ** 0.5).clamp(lo=NORM_EPS)
    return dot / (nv * ne)


def similarity_sequence(visual: Tensor, textual: Tensor) -> Tensor:
    """Per-frame cosine similarities for paired [..., T, d] embeddings.

    Returns [..., T, 1]. Requires the two embedding spaces to share one
    dimension; the sequence feeds the coarse-grained recurrent branch.
    """
    if visual.shape[-1] != textual.shape[-1]:
        raise ShapeError(
            "similarity needs paired embedding spaces: "
            f"d_v={visual.shape[-1]} vs d_e={textual.shape[-1]}")
    return cosine(visual, textual)
