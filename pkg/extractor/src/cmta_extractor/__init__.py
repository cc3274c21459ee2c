"""Video-to-embedding-clip extraction pipeline."""

from .clip_io import ClipWriteError, write_clip, write_manifest
from .extract import (
    BatchReport,
    ExtractorConfig,
    ExtractorConfigError,
    VideoJob,
    extract,
    extract_batch,
    load_video_manifest,
)
from .frames import VideoDecodeError, frame_indices, read_frames
from .models import (
    DEFAULT_CAPTION_CHECKPOINT,
    DEFAULT_ENCODER_CHECKPOINT,
    BlipCaptioner,
    Captioner,
    CheckpointLoadError,
    ClipEncoder,
    Encoder,
)

__all__ = [
    "BatchReport",
    "BlipCaptioner",
    "Captioner",
    "CheckpointLoadError",
    "ClipEncoder",
    "ClipWriteError",
    "DEFAULT_CAPTION_CHECKPOINT",
    "DEFAULT_ENCODER_CHECKPOINT",
    "Encoder",
    "ExtractorConfig",
    "ExtractorConfigError",
    "VideoDecodeError",
    "VideoJob",
    "extract",
    "extract_batch",
    "frame_indices",
    "load_video_manifest",
    "read_frames",
    "write_clip",
    "write_manifest",
]
