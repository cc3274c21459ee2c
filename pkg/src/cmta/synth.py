"""Synthetic embedding clips with controlled similarity trajectories.

Real-labeled clips get a per-frame target similarity that wanders widely
around a base alignment; fake-labeled clips get a nearly constant target.
The textual vector is constructed at an exact angle to the visual one, so
the per-frame cosine tracks the target up to the configured noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import EmbeddingClip, Manifest, ManifestEntry, write_clip, write_manifest


@dataclass
class SynthConfig:
    d: int = 16            # embedding dimension (shared by both modalities)
    clip_len: int = 8      # frames per clip
    n_per_class: int = 100
    mu: float = 0.3        # base alignment level
    a_real: float = 0.25   # target similarity stays within [mu-a, mu+a]
    a_fake: float = 0.02
    noise: float = 0.01
    seed: int = 0
    subset: str = "synthetic"

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("embedding dimension must be >= 2")
        if not 0 <= self.a_fake <= self.a_real:
            raise ValueError("need 0 <= a_fake <= a_real")
        if self.a_real > 1 - abs(self.mu):
            raise ValueError("drift amplitude exceeds the feasible cosine band")


def _target_walk(t: int, mu: float, amplitude: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Reflected random walk inside [mu - amplitude, mu + amplitude]."""
    lo, hi = mu - amplitude, mu + amplitude
    cur = mu if amplitude == 0 else rng.uniform(lo, hi)
    out = np.empty(t)
    for i in range(t):
        out[i] = cur
        cur += rng.normal(0.0, amplitude / 2.0) if amplitude > 0 else 0.0
        if cur > hi:
            cur = hi - (cur - hi)
        if cur < lo:
            cur = lo + (lo - cur)
        cur = min(max(cur, lo), hi)
    return np.clip(out, -1.0, 1.0)


def _unit(vec: np.ndarray) -> np.ndarray:
    return vec / max(np.linalg.norm(vec), 1e-12)


def gen_clip(cfg: SynthConfig, label: int, rng: np.random.Generator,
             clip_id: str = "clip") -> EmbeddingClip:
    amplitude = cfg.a_real if label == 0 else cfg.a_fake
    targets = _target_walk(cfg.clip_len, cfg.mu, amplitude, rng)
    visual = np.empty((cfg.clip_len, cfg.d), dtype=np.float64)
    textual = np.empty((cfg.clip_len, cfg.d), dtype=np.float64)
    for t in range(cfg.clip_len):
        v = _unit(rng.standard_normal(cfg.d))
        w = rng.standard_normal(cfg.d)
        w = _unit(w - np.dot(w, v) * v)  # unit vector orthogonal to v
        s = float(targets[t])
        e = s * v + np.sqrt(max(1.0 - s * s, 0.0)) * w
        e += cfg.noise * rng.standard_normal(cfg.d)
        visual[t] = v
        textual[t] = e
    return EmbeddingClip(clip_id=clip_id, visual=visual, textual=textual,
                         label=label)


def gen_dataset(cfg: SynthConfig, out_dir) -> tuple[Manifest, Path]:
    """Write a 1:1 balanced .cmta dataset plus its manifest; returns both.

    Per-clip RNGs are derived from the seed and clip index, so generation
    is deterministic and safe to parallelize.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries: list[ManifestEntry] = []
    for label, tag in ((0, "real"), (1, "fake")):
        for i in range(cfg.n_per_class):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=cfg.seed,
                                       spawn_key=(label, i)))
            clip_id = f"{tag}_{i:05d}"
            clip = gen_clip(cfg, label, rng, clip_id=clip_id)
            path = out_dir / f"{clip_id}.cmta"
            try:
                write_clip(clip, path)
            except OSError as exc:
                raise OSError(f"failed writing {path}: {exc}") from exc
            entries.append(ManifestEntry(path=path, label=label,
                                         subset=cfg.subset))
    manifest = Manifest(entries)
    manifest_path = out_dir / "manifest.csv"
    write_manifest(manifest, manifest_path, relative_to=out_dir)
    return manifest, manifest_path
