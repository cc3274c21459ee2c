"""Binary per-clip embedding format, dataset manifests, and clip sampling.

Wire format (.cmta, little-endian):
    magic "CMTA" | u16 version=1 | u32 N | u32 d_v | u32 d_e | u8 label |
    N*d_v float32 visual | N*d_e float32 textual

Manifest: UTF-8 CSV with header ``path,label,subset``; paths are relative to
the manifest file's directory unless absolute.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"CMTA"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIIB")


class ClipLoadError(Exception):
    """Base class for .cmta load failures."""


class BadMagicError(ClipLoadError):
    pass


class VersionError(ClipLoadError):
    pass


class TruncatedError(ClipLoadError):
    pass


class NonFiniteError(ClipLoadError):
    pass


class ManifestError(Exception):
    pass


@dataclass
class EmbeddingClip:
    """A fixed-length sequence of paired per-frame embeddings plus a label."""

    clip_id: str
    visual: np.ndarray   # [N, d_v] float32
    textual: np.ndarray  # [N, d_e] float32
    label: int           # 0 = real, 1 = fake

    def __post_init__(self):
        self.visual = np.ascontiguousarray(self.visual, dtype=np.float32)
        self.textual = np.ascontiguousarray(self.textual, dtype=np.float32)
        if self.visual.ndim != 2 or self.textual.ndim != 2:
            raise ValueError("embeddings must be [N, d] matrices")
        if self.visual.shape[0] != self.textual.shape[0] or self.visual.shape[0] < 1:
            raise ValueError(
                f"frame counts differ: visual {self.visual.shape[0]}, "
                f"textual {self.textual.shape[0]}")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")

    @property
    def n_frames(self) -> int:
        return self.visual.shape[0]

    @property
    def d_v(self) -> int:
        return self.visual.shape[1]

    @property
    def d_e(self) -> int:
        return self.textual.shape[1]


def write_clip(clip: EmbeddingClip, path) -> None:
    if not (np.isfinite(clip.visual).all() and np.isfinite(clip.textual).all()):
        raise ValueError(f"refusing to write non-finite embeddings for {clip.clip_id}")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, clip.n_frames,
                          clip.d_v, clip.d_e, clip.label)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(clip.visual.astype("<f4").tobytes())
        fh.write(clip.textual.astype("<f4").tobytes())


def read_clip(path) -> EmbeddingClip:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedError(f"{path}: file shorter than header")
    magic, version, n, d_v, d_e, label = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * n * (d_v + d_e)
    if len(raw) != expected:
        raise TruncatedError(
            f"{path}: payload is {len(raw)} bytes, expected {expected}")
    if label not in (0, 1):
        raise ClipLoadError(f"{path}: label byte {label} not in {{0,1}}")
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    visual = body[: n * d_v].reshape(n, d_v)
    textual = body[n * d_v:].reshape(n, d_e)
    if not np.isfinite(body).all():
        raise NonFiniteError(f"{path}: non-finite embedding values")
    return EmbeddingClip(clip_id=path.stem, visual=visual, textual=textual,
                         label=int(label))


def sample_clip(clip: EmbeddingClip, t: int,
                rng: np.random.Generator) -> EmbeddingClip:
    """Random contiguous T-frame window; short clips repeat the final frame."""
    if t < 1:
        raise ValueError(f"clip length must be positive, got {t}")
    return _window(clip, t, _random_start(clip.n_frames, t, rng))


def center_clip(clip: EmbeddingClip, t: int) -> EmbeddingClip:
    """Deterministic center window, used at evaluation time."""
    if t < 1:
        raise ValueError(f"clip length must be positive, got {t}")
    return _window(clip, t, max(0, (clip.n_frames - t) // 2))


def _random_start(n: int, t: int, rng: np.random.Generator) -> int:
    return int(rng.integers(0, n - t + 1)) if n > t else 0


def _window(clip: EmbeddingClip, t: int, start: int) -> EmbeddingClip:
    n = clip.n_frames
    idx = np.minimum(np.arange(start, start + t), n - 1)
    return EmbeddingClip(clip_id=clip.clip_id, visual=clip.visual[idx],
                         textual=clip.textual[idx], label=clip.label)


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: int
    subset: str

    @property
    def clip_id(self) -> str:
        return self.path.stem


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def labels(self) -> list[int]:
        return [e.label for e in self.entries]


def load_manifest(path, check_files: bool = True) -> Manifest:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    entries: list[ManifestEntry] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row_no, row in enumerate(csv.reader(fh)):
            if not row or (row_no == 0 and row[0].strip().lower() == "path"):
                continue
            if len(row) != 3:
                raise ManifestError(f"{path}:{row_no + 1}: expected path,label,subset")
            p = Path(row[0])
            if not p.is_absolute():
                p = base / p
            try:
                label = int(row[1])
            except ValueError:
                raise ManifestError(f"{path}:{row_no + 1}: bad label {row[1]!r}") from None
            if label not in (0, 1):
                raise ManifestError(f"{path}:{row_no + 1}: label {label} not in {{0,1}}")
            entries.append(ManifestEntry(path=p, label=label, subset=row[2].strip()))
    if not entries:
        raise ManifestError(f"{path}: empty manifest")
    seen: dict[str, Path] = {}
    for e in entries:
        if e.clip_id in seen and seen[e.clip_id] != e.path:
            raise ManifestError(f"duplicate clip_id {e.clip_id!r} in {path}")
        seen[e.clip_id] = e.path
    if check_files:
        missing = [str(e.path) for e in entries if not e.path.exists()]
        if missing:
            raise ManifestError(f"{path}: missing files: {', '.join(missing[:5])}")
    return Manifest(entries)


def write_manifest(manifest: Manifest, path, relative_to=None) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "subset"])
        for e in manifest.entries:
            p = e.path
            if relative_to is not None:
                try:
                    p = p.relative_to(relative_to)
                except ValueError:
                    pass
            writer.writerow([str(p), e.label, e.subset])


def split(manifest: Manifest, val_fraction: float,
          rng: np.random.Generator) -> tuple[Manifest, Manifest]:
    """Disjoint, exhaustive train/val partition, deterministic given the rng."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n = len(manifest)
    n_val = min(max(1, round(n * val_fraction)), n - 1)
    order = rng.permutation(n)
    val_idx = set(order[:n_val].tolist())
    train = [e for i, e in enumerate(manifest.entries) if i not in val_idx]
    val = [e for i, e in enumerate(manifest.entries) if i in val_idx]
    return Manifest(train), Manifest(val)
