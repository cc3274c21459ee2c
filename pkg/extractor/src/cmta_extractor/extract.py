"""Video -> .cmta extraction pipeline."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .clip_io import ClipWriteError, write_clip, write_manifest
from .frames import VideoDecodeError, read_frames
from .models import (
    DEFAULT_CAPTION_CHECKPOINT,
    DEFAULT_ENCODER_CHECKPOINT,
    BlipCaptioner,
    Captioner,
    ClipEncoder,
    Encoder,
)

logger = logging.getLogger(__name__)


class ExtractorConfigError(Exception):
    """Raised for invalid extraction settings."""


@dataclass(frozen=True)
class ExtractorConfig:
    """Settings for one extraction run.

    ``frames_per_video`` should stay >= the clip length the downstream
    trainer samples (it takes a contiguous sub-window), so one extraction
    pass serves any smaller window choice; 16 covers the default of 8.
    """

    caption_checkpoint: str = DEFAULT_CAPTION_CHECKPOINT
    encoder_checkpoint: str = DEFAULT_ENCODER_CHECKPOINT
    frames_per_video: int = 16
    device: str = "cpu"
    output_dir: str = "."
    workers: int = 1

    def __post_init__(self) -> None:
        if self.frames_per_video < 1:
            raise ExtractorConfigError(
                f"frames_per_video must be >= 1, got {self.frames_per_video}"
            )
        if self.workers < 1:
            raise ExtractorConfigError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class VideoJob:
    path: Path
    label: int
    subset: str = "default"


@dataclass
class BatchReport:
    written: list[Path] = field(default_factory=list)
    skipped: list[tuple[Path, str]] = field(default_factory=list)
    manifest: Path | None = None

    def summary(self) -> str:
        lines = [f"written: {len(self.written)}  skipped: {len(self.skipped)}"]
        for path, reason in self.skipped:
            lines.append(f"skip {path}: {reason}")
        return "\n".join(lines)


def default_backends(config: ExtractorConfig) -> tuple[Captioner, Encoder]:
    """Load the pretrained captioner and encoder named in the config."""
    captioner = BlipCaptioner(config.caption_checkpoint, device=config.device)
    encoder = ClipEncoder(config.encoder_checkpoint, device=config.device)
    return captioner, encoder


def extract(
    video_path: str | Path,
    label: int,
    config: ExtractorConfig,
    captioner: Captioner,
    encoder: Encoder,
    out_path: str | Path | None = None,
) -> Path:
    """Extract one video into a .cmta clip and return the output path.

    Per sampled frame: generate a caption, embed the frame and the caption
    into the encoder's shared space, and store the paired rows.
    """
    video_path = Path(video_path)
    if out_path is None:
        out_path = Path(config.output_dir) / (video_path.stem + ".cmta")
    out_path = Path(out_path)

    frames = read_frames(video_path, config.frames_per_video)
    captions = captioner.caption(frames)
    if len(captions) != len(frames):
        raise ClipWriteError(
            f"captioner returned {len(captions)} captions for {len(frames)} frames"
        )
    visual = np.asarray(encoder.encode_images(frames), dtype=np.float32)
    textual = np.asarray(encoder.encode_texts(captions), dtype=np.float32)
    if visual.shape[1] != textual.shape[1]:
        raise ClipWriteError(
            f"encoder pair must share one space: d_v={visual.shape[1]} "
            f"d_e={textual.shape[1]}"
        )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_clip(out_path, visual, textual, label)
    return out_path


def load_video_manifest(path: str | Path) -> list[VideoJob]:
    """Read a video manifest CSV: header ``path,label[,subset]``.

    Paths are resolved relative to the manifest's directory.
    """
    path = Path(path)
    jobs: list[VideoJob] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ExtractorConfigError(f"empty video manifest: {path}")
    start = 1 if rows[0][0].strip().lower() == "path" else 0
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if len(row) < 2:
            raise ExtractorConfigError(
                f"{path}:{lineno}: expected path,label[,subset], got {row!r}"
            )
        raw = row[0].strip()
        video = Path(raw)
        if not video.is_absolute():
            video = path.parent / video
        try:
            label = int(row[1].strip())
        except ValueError as exc:
            raise ExtractorConfigError(
                f"{path}:{lineno}: label must be an integer, got {row[1]!r}"
            ) from exc
        if label not in (0, 1):
            raise ExtractorConfigError(
                f"{path}:{lineno}: label must be 0 or 1, got {label}"
            )
        subset = row[2].strip() if len(row) > 2 and row[2].strip() else "default"
        jobs.append(VideoJob(video, label, subset))
    return jobs


def extract_batch(
    jobs: Sequence[VideoJob],
    config: ExtractorConfig,
    captioner: Captioner,
    encoder: Encoder,
) -> BatchReport:
    """Extract many videos; undecodable ones are skipped and reported.

    Outputs land in ``config.output_dir`` next to a ``manifest.csv`` listing
    every written clip with its label and subset. The manifest is written
    last, so it only ever names complete files.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = BatchReport()
    results: list[tuple[VideoJob, Path]] = []

    def run_one(job: VideoJob) -> tuple[VideoJob, Path | None, str | None]:
        out = out_dir / (job.path.stem + ".cmta")
        try:
            extract(job.path, job.label, config, captioner, encoder, out_path=out)
            return job, out, None
        except (VideoDecodeError, ClipWriteError, OSError) as exc:
            return job, None, str(exc)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(run_one, jobs))
    else:
        outcomes = [run_one(job) for job in jobs]

    for job, out, err in outcomes:
        if err is not None:
            logger.warning("skipping %s: %s", job.path, err)
            report.skipped.append((job.path, err))
        else:
            assert out is not None
            report.written.append(out)
            results.append((job, out))

    manifest_path = out_dir / "manifest.csv"
    write_manifest(
        manifest_path,
        [(out.name, job.label, job.subset) for job, out in results],
    )
    report.manifest = manifest_path
    return report
