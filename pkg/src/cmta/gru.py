"""Coarse-grained temporal branch: a single GRU over the similarity sequence.

Gate weights act on the concatenation [h_{t-1}, s_t]; per-gate biases are
included (initialized to zero). The final hidden state summarizes the clip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, concat


@dataclass
class GruParams:
    w_z: Tensor  # [H, H+1]
    w_r: Tensor  # [H, H+1]
    w_h: Tensor  # [H, H+1]
    b_z: Tensor  # [H]
    b_r: Tensor  # [H]
    b_h: Tensor  # [H]

    @property
    def hidden_size(self) -> int:
        return self.w_z.shape[0]

    def named(self, prefix: str = "gru") -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.{k}", getattr(self, k))
                for k in ("w_z", "w_r", "w_h", "b_z", "b_r", "b_h")]


def gru_cell(h_prev: Tensor, s_t: Tensor, params: GruParams) -> Tensor:
    """One recurrence step. h_prev: [B, H] (or [H]); s_t: [B, 1] (or scalar)."""
    single = h_prev.ndim == 1
    if single:
        h_prev = h_prev.reshape(1, -1)
        s_t = s_t.reshape(1, 1) if isinstance(s_t, Tensor) else Tensor([[float(s_t)]])
    elif not isinstance(s_t, Tensor):
        s_t = Tensor(np.full((h_prev.shape[0], 1), float(s_t)))
    hs = concat([h_prev, s_t], axis=1)
    z = (hs @ params.w_z.transpose() + params.b_z).sigmoid()
    r = (hs @ params.w_r.transpose() + params.b_r).sigmoid()
    h_cand = (concat([r * h_prev, s_t], axis=1) @ params.w_h.transpose()
              + params.b_h).tanh()
    h = (1.0 - z) * h_prev + z * h_cand
    return h.reshape(-1) if single else h


def gru_forward(seq: Tensor, params: GruParams,
                h_0: Tensor | None = None) -> Tensor:
    """Fold gru_cell over a similarity sequence [B, T, 1]; returns h_T [B, H].

    Also accepts an unbatched [T, 1] or [T] sequence, returning [H].
    """
    single = seq.ndim < 3
    if seq.ndim == 1:
        seq = seq.reshape(1, -1, 1)
    elif seq.ndim == 2:
        seq = seq.reshape(1, *seq.shape)
    b, t = seq.shape[0], seq.shape[1]
    if t < 1:
        raise ValueError("similarity sequence is empty")
    h = h_0
    if h is None:
        h = Tensor(np.zeros((b, params.hidden_size)))
    elif h.ndim == 1:
        h = h.reshape(1, -1)
    for step in range(t):
        h = gru_cell(h, seq[:, step, :], params)
    return h.reshape(-1) if single else h
