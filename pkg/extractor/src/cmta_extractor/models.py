"""Captioning and embedding backends.

The extraction pipeline is written against two small protocols so tests can
inject deterministic stubs; the default backends wrap pretrained Hugging
Face checkpoints (a BLIP image captioner and a CLIP vision-language encoder
pair), used strictly for inference with frozen weights.
"""

from __future__ import annotations

from typing import Protocol, Sequence, runtime_checkable

import numpy as np

DEFAULT_CAPTION_CHECKPOINT = "Salesforce/blip-image-captioning-base"
DEFAULT_ENCODER_CHECKPOINT = "openai/clip-vit-base-patch32"


class CheckpointLoadError(Exception):
    """Raised when a pretrained checkpoint cannot be loaded."""


@runtime_checkable
class Captioner(Protocol):
    def caption(self, frames: Sequence[np.ndarray]) -> list[str]:
        """One caption per RGB uint8 frame."""
        ...


@runtime_checkable
class Encoder(Protocol):
    def encode_images(self, frames: Sequence[np.ndarray]) -> np.ndarray:
        """[N, d_v] float32 visual embeddings for RGB uint8 frames."""
        ...

    def encode_texts(self, captions: Sequence[str]) -> np.ndarray:
        """[N, d_e] float32 textual embeddings."""
        ...


class BlipCaptioner:
    """Greedy-decoding image captioner over a pretrained BLIP checkpoint.

    Decoding settings are fixed (greedy, capped length) so reruns produce
    identical captions.
    """

    def __init__(self, checkpoint: str = DEFAULT_CAPTION_CHECKPOINT,
                 device: str = "cpu", max_length: int = 32) -> None:
        try:
            import torch
            from transformers import BlipForConditionalGeneration, BlipProcessor
        except ImportError as exc:  # pragma: no cover - env without extras
            raise CheckpointLoadError(
                f"captioning backend needs torch+transformers: {exc}"
            ) from exc
        try:
            self._processor = BlipProcessor.from_pretrained(checkpoint)
            self._model = BlipForConditionalGeneration.from_pretrained(checkpoint)
        except Exception as exc:
            raise CheckpointLoadError(
                f"failed to load caption checkpoint {checkpoint!r}: {exc}"
            ) from exc
        self._model.eval().to(device)
        self._torch = torch
        self._device = device
        self._max_length = max_length

    def caption(self, frames: Sequence[np.ndarray]) -> list[str]:
        from PIL import Image

        images = [Image.fromarray(f) for f in frames]
        inputs = self._processor(images=images, return_tensors="pt").to(self._device)
        with self._torch.no_grad():
            out = self._model.generate(
                **inputs, max_length=self._max_length, num_beams=1, do_sample=False
            )
        return [
            self._processor.decode(ids, skip_special_tokens=True).strip()
            for ids in out
        ]


class ClipEncoder:
    """Shared-space image/text encoder over a pretrained CLIP checkpoint."""

    def __init__(self, checkpoint: str = DEFAULT_ENCODER_CHECKPOINT,
                 device: str = "cpu") -> None:
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:  # pragma: no cover - env without extras
            raise CheckpointLoadError(
                f"encoder backend needs torch+transformers: {exc}"
            ) from exc
        try:
            self._processor = CLIPProcessor.from_pretrained(checkpoint)
            self._model = CLIPModel.from_pretrained(checkpoint)
        except Exception as exc:
            raise CheckpointLoadError(
                f"failed to load encoder checkpoint {checkpoint!r}: {exc}"
            ) from exc
        self._model.eval().to(device)
        self._torch = torch
        self._device = device

    def encode_images(self, frames: Sequence[np.ndarray]) -> np.ndarray:
        from PIL import Image

        images = [Image.fromarray(f) for f in frames]
        inputs = self._processor(images=images, return_tensors="pt").to(self._device)
        with self._torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)

    def encode_texts(self, captions: Sequence[str]) -> np.ndarray:
        inputs = self._processor(
            text=list(captions), return_tensors="pt", padding=True, truncation=True
        ).to(self._device)
        with self._torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)
