from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np
import pytest

HEADER = struct.Struct("<4sHIIIB")


def parse_clip(path: Path) -> tuple[int, np.ndarray, np.ndarray]:
    """Independent reader for the .cmta wire format, used only by tests."""
    blob = path.read_bytes()
    magic, version, n, d_v, d_e, label = HEADER.unpack_from(blob, 0)
    assert magic == b"CMTA" and version == 1
    body = np.frombuffer(blob, dtype="<f4", offset=HEADER.size)
    assert body.size == n * (d_v + d_e)
    visual = body[: n * d_v].reshape(n, d_v)
    textual = body[n * d_v :].reshape(n, d_e)
    return label, visual, textual


def _cell_means(frame: np.ndarray) -> np.ndarray:
    """Mean grayscale of a 4x4 grid of cells, in [0, 1]."""
    gray = frame.astype(np.float64).mean(axis=2) / 255.0
    h, w = gray.shape
    cells = [
        gray[i * h // 4 : (i + 1) * h // 4, j * w // 4 : (j + 1) * w // 4].mean()
        for i in range(4)
        for j in range(4)
    ]
    return np.array(cells)


class GridCaptioner:
    """Describes each frame as its quantized 4x4 grid of brightness levels."""

    def caption(self, frames: Sequence[np.ndarray]) -> list[str]:
        out = []
        for frame in frames:
            levels = np.clip(np.round(_cell_means(frame) * 31), 0, 31).astype(int)
            out.append("grid " + " ".join(str(v) for v in levels))
        return out


class GridEncoder:
    """Embeds the 4x4 brightness grid through a fixed random projection.

    Image and text paths share the projection, so a caption embeds close to
    the frame it describes (up to quantization) and far from unrelated
    frames.
    """

    def __init__(self, dim: int = 512, seed: int = 7) -> None:
        self.dim = dim
        rng = np.random.default_rng(seed)
        self._proj = rng.standard_normal((16, dim))

    def _embed(self, grids: np.ndarray) -> np.ndarray:
        centered = grids - 0.5
        vecs = centered @ self._proj
        norms = np.maximum(np.linalg.norm(vecs, axis=1, keepdims=True), 1e-8)
        return (vecs / norms).astype(np.float32)

    def encode_images(self, frames: Sequence[np.ndarray]) -> np.ndarray:
        return self._embed(np.stack([_cell_means(f) for f in frames]))

    def encode_texts(self, captions: Sequence[str]) -> np.ndarray:
        grids = []
        for caption in captions:
            parts = caption.split()
            assert parts[0] == "grid" and len(parts) == 17
            grids.append(np.array([int(p) for p in parts[1:]]) / 31.0)
        return self._embed(np.stack(grids))


def write_test_video(path: Path, n_frames: int, seed: int,
                     size: tuple[int, int] = (64, 64)) -> None:
    """Write a small video of smooth per-frame color gradients.

    Coarse structure survives lossy encoding, and the seed makes every
    video's content distinct.
    """
    rng = np.random.default_rng(seed)
    w, h = size
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"mp4v"), 8.0, (w, h)
    )
    assert writer.isOpened(), "mp4v VideoWriter unavailable"
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(n_frames):
        corners = rng.uniform(0, 255, size=(2, 2, 3))
        fy = yy / (h - 1)
        fx = xx / (w - 1)
        frame = (
            corners[0, 0] * ((1 - fy) * (1 - fx))[..., None]
            + corners[0, 1] * ((1 - fy) * fx)[..., None]
            + corners[1, 0] * (fy * (1 - fx))[..., None]
            + corners[1, 1] * (fy * fx)[..., None]
        )
        writer.write(frame.astype(np.uint8))
    writer.release()


@pytest.fixture()
def stub_backends() -> tuple[GridCaptioner, GridEncoder]:
    return GridCaptioner(), GridEncoder()
