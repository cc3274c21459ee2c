"""Command-line entry point: video manifest -> .cmta clips + manifest."""

from __future__ import annotations

import argparse
import logging
import sys

from .extract import (
    ExtractorConfig,
    ExtractorConfigError,
    default_backends,
    extract_batch,
    load_video_manifest,
)
from .models import (
    DEFAULT_CAPTION_CHECKPOINT,
    DEFAULT_ENCODER_CHECKPOINT,
    CheckpointLoadError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmta-extract",
        description=(
            "Extract per-frame visual/textual embedding clips (.cmta) from "
            "videos listed in a CSV manifest (path,label[,subset])."
        ),
    )
    parser.add_argument("--videos", required=True,
                        help="video manifest CSV: path,label[,subset]")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--frames", type=int, default=16,
                        help="frames sampled per video (default 16)")
    parser.add_argument("--caption-checkpoint", default=DEFAULT_CAPTION_CHECKPOINT)
    parser.add_argument("--encoder-checkpoint", default=DEFAULT_ENCODER_CHECKPOINT)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--workers", type=int, default=1)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = ExtractorConfig(
            caption_checkpoint=args.caption_checkpoint,
            encoder_checkpoint=args.encoder_checkpoint,
            frames_per_video=args.frames,
            device=args.device,
            output_dir=args.out,
            workers=args.workers,
        )
        jobs = load_video_manifest(args.videos)
    except ExtractorConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    try:
        captioner, encoder = default_backends(config)
    except CheckpointLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    report = extract_batch(jobs, config, captioner, encoder)
    print(report.summary())
    print(f"manifest: {report.manifest}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
