"""Deterministic frame sampling from video files."""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np


class VideoDecodeError(Exception):
    """Raised when a video cannot be opened or yields no frames."""


def frame_indices(total_frames: int, n: int) -> list[int]:
    """Evenly spaced indices ``floor(k * (F - 1) / (N - 1))`` for k in [0, N).

    Deterministic by construction: two runs over the same file select the
    same frames. When the video is shorter than ``n`` frames, indices repeat.
    """
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    if total_frames <= 0:
        raise ValueError(f"total_frames must be positive, got {total_frames}")
    if n == 1:
        return [0]
    return [k * (total_frames - 1) // (n - 1) for k in range(n)]


def read_frames(path: str | Path, n: int) -> list[np.ndarray]:
    """Decode ``n`` evenly spaced RGB frames (uint8, HxWx3) from a video."""
    path = str(path)
    cap = cv2.VideoCapture(path)
    if not cap.isOpened():
        raise VideoDecodeError(f"cannot open video: {path}")
    try:
        total = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        if total <= 0:
            raise VideoDecodeError(f"video reports no frames: {path}")
        frames: list[np.ndarray] = []
        # Sequential scan keeping only the wanted indices: CAP_PROP_POS_FRAMES
        # seeks are unreliable across containers/codecs.
        wanted = frame_indices(total, n)
        by_index: dict[int, np.ndarray] = {}
        need = set(wanted)
        idx = 0
        while need and idx <= max(need):
            ok, frame = cap.read()
            if not ok:
                break
            if idx in need:
                by_index[idx] = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
                need.discard(idx)
            idx += 1
        if need:
            # Codec metadata may overstate the frame count; fall back to the
            # last decodable frame for any index past the true end.
            if not by_index:
                raise VideoDecodeError(f"no decodable frames: {path}")
            last = by_index[max(by_index)]
            for i in need:
                by_index[i] = last
        for i in wanted:
            frames.append(by_index[i])
        return frames
    finally:
        cap.release()
