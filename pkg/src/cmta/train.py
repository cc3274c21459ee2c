"""Initialization, Adam, plateau LR scheduling, the epoch loop, checkpoints.

Training is single-threaded and fully deterministic given (config, seed,
data): parameter init order, per-epoch clip resampling, shuffling, and
gradient reduction order are all fixed.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .data import EmbeddingClip, Manifest, center_clip, read_clip, sample_clip
from .encoder import EncoderLayerParams, EncoderParams
from .gru import GruParams
from .model import HeadParams, Model, Variant, encoder_in_dim, head_width
from .tensor import Tensor, get_default_dtype


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    lr: float = 1e-4
    scheduler_factor: float = 0.5
    scheduler_patience: int = 5
    scheduler_threshold: float = 1e-4
    clip_len: int = 8        # T
    hidden: int = 256        # GRU state H
    model_dim: int = 256     # encoder D
    ff_dim: int = 0          # 0 means 4 * model_dim
    layers: int = 2
    heads: int = 4
    variant: str = "full"
    seed: int = 0
    val_metric: str = "auc"  # auc | acc | loss
    val_split: float = 0.1
    freeze_clips: bool = False  # sample one clip per video once, not per epoch

    def __post_init__(self):
        if self.ff_dim == 0:
            self.ff_dim = 4 * self.model_dim
        for name in ("epochs", "batch_size", "clip_len", "hidden", "model_dim",
                     "ff_dim", "layers", "heads"):
            if getattr(self, name) < (0 if name == "layers" else 1):
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.scheduler_patience < 1:
            raise ConfigError("scheduler patience must be >= 1")
        if not 0 < self.scheduler_factor < 1:
            raise ConfigError("scheduler factor must be in (0, 1)")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.model_dim % self.heads:
            raise ConfigError(
                f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        if self.val_metric not in ("auc", "acc", "loss"):
            raise ConfigError(f"unknown val_metric {self.val_metric!r}")
        Variant.parse(self.variant)  # raises on bad value


def config_json(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(config_json(config).encode()).hexdigest()


# ---- initialization -----------------------------------------------------

def xavier_uniform(shape: tuple[int, int], rng: np.random.Generator) -> Tensor:
    fan_in, fan_out = shape[1], shape[0]
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _zeros(*shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(*shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


def init_params(cfg: TrainConfig, d_v: int, d_e: int,
                rng: np.random.Generator) -> Model:
    """Xavier-uniform weights, zero biases, unit layer-norm scales.

    Sampling order is fixed so a seed pins every parameter bit-exactly.
    Both branches are always built; variants that skip a branch simply
    leave its parameters untouched (zero gradient).
    """
    variant = Variant.parse(cfg.variant)
    h, d = cfg.hidden, cfg.model_dim
    gru = GruParams(
        w_z=xavier_uniform((h, h + 1), rng),
        w_r=xavier_uniform((h, h + 1), rng),
        w_h=xavier_uniform((h, h + 1), rng),
        b_z=_zeros(h), b_r=_zeros(h), b_h=_zeros(h))
    d_in = encoder_in_dim(variant, d_v, d_e)
    layers = []
    w_p = xavier_uniform((d, d_in), rng)
    pos = xavier_uniform((cfg.clip_len, d), rng)
    for _ in range(cfg.layers):
        layers.append(EncoderLayerParams(
            w_q=xavier_uniform((d, d), rng),
            w_k=xavier_uniform((d, d), rng),
            w_v=xavier_uniform((d, d), rng),
            w_o=xavier_uniform((d, d), rng),
            w_1=xavier_uniform((cfg.ff_dim, d), rng), b_1=_zeros(cfg.ff_dim),
            w_2=xavier_uniform((d, cfg.ff_dim), rng), b_2=_zeros(d),
            ln1_scale=_ones(d), ln1_shift=_zeros(d),
            ln2_scale=_ones(d), ln2_shift=_zeros(d)))
    encoder = EncoderParams(w_p=w_p, b_p=_zeros(d), pos=pos,
                            layers=layers, heads=cfg.heads)
    head = HeadParams(w=xavier_uniform((2, head_width(variant, h, d)), rng),
                      b=_zeros(2))
    return Model(variant=variant, gru=gru, encoder=encoder, head=head)


# ---- optimizer and scheduler --------------------------------------------

@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(named_params: list[tuple[str, Tensor]], state: AdamState,
              lr: float) -> None:
    """Bias-corrected Adam update in place; missing grads count as zero."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for name, p in named_params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data, dtype=np.float64)
            state.v[name] = np.zeros_like(p.data, dtype=np.float64)
        m = state.m[name] = b1 * state.m[name] + (1 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(
            p.data.dtype)


@dataclass
class PlateauScheduler:
    """Halve (factor) the lr after `patience` consecutive non-improving epochs.

    Maximization mode with a relative improvement threshold: an epoch counts
    as improving only if metric > best + threshold * |best|.
    """

    lr: float
    factor: float = 0.5
    patience: int = 5
    threshold: float = 1e-4
    best: float | None = None
    bad_epochs: int = 0

    def step(self, metric: float) -> float:
        if self.best is None or metric > self.best + self.threshold * abs(self.best):
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
        return self.lr


# ---- checkpoints ----------------------------------------------------------

CHECKPOINT_MAGIC = b"CMTK"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    config: dict
    d_v: int
    d_e: int
    epoch: int
    best_metric: float
    arrays: dict[str, np.ndarray]       # model parameters by name
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    adam_step_count: int
    scheduler: dict                      # lr, best, bad_epochs

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)


def _write_array(fh, name: str, arr: np.ndarray) -> None:
    enc = name.encode()
    fh.write(struct.pack("<H", len(enc)))
    fh.write(enc)
    flag = 0 if arr.dtype == np.float32 else 1
    fh.write(struct.pack("<BB", flag, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.astype("<f4" if flag == 0 else "<f8").tobytes())


def _read_array(view: memoryview, off: int) -> tuple[str, np.ndarray, int]:
    (nlen,) = struct.unpack_from("<H", view, off)
    off += 2
    name = bytes(view[off:off + nlen]).decode()
    off += nlen
    flag, ndim = struct.unpack_from("<BB", view, off)
    off += 2
    shape = struct.unpack_from(f"<{ndim}I", view, off)
    off += 4 * ndim
    dt = "<f4" if flag == 0 else "<f8"
    count = int(np.prod(shape)) if ndim else 1
    arr = np.frombuffer(view, dtype=dt, count=count, offset=off).reshape(shape)
    off += arr.nbytes
    return name, arr.copy(), off


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    cfg = config_json(ckpt.config).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<IIId", ckpt.d_v, ckpt.d_e, ckpt.epoch,
                             ckpt.best_metric))
        sched_best = ckpt.scheduler.get("best")
        fh.write(struct.pack("<ddII", ckpt.scheduler["lr"],
                             math.nan if sched_best is None else sched_best,
                             ckpt.scheduler["bad_epochs"], ckpt.adam_step_count))
        groups = [("p", ckpt.arrays), ("m", ckpt.adam_m), ("v", ckpt.adam_v)]
        fh.write(struct.pack("<I", sum(len(g) for _, g in groups)))
        for tag, group in groups:
            for name in sorted(group):
                _write_array(fh, f"{tag}:{name}", group[name])


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise TrainingError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise TrainingError(f"{path}: unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack_from("<I", raw, 6)
    off = 10
    config = json.loads(raw[off:off + cfg_len].decode())
    off += cfg_len
    d_v, d_e, epoch, best_metric = struct.unpack_from("<IIId", raw, off)
    off += struct.calcsize("<IIId")
    lr, sched_best, bad, adam_step_count = struct.unpack_from("<ddII", raw, off)
    off += struct.calcsize("<ddII")
    (n_arrays,) = struct.unpack_from("<I", raw, off)
    off += 4
    view = memoryview(raw)
    groups: dict[str, dict[str, np.ndarray]] = {"p": {}, "m": {}, "v": {}}
    for _ in range(n_arrays):
        name, arr, off = _read_array(view, off)
        tag, _, key = name.partition(":")
        groups[tag][key] = arr
    return Checkpoint(
        config=config, d_v=d_v, d_e=d_e, epoch=epoch, best_metric=best_metric,
        arrays=groups["p"], adam_m=groups["m"], adam_v=groups["v"],
        adam_step_count=adam_step_count,
        scheduler={"lr": lr, "best": None if math.isnan(sched_best) else sched_best,
                   "bad_epochs": bad})


def model_from_checkpoint(ckpt: Checkpoint) -> tuple[Model, TrainConfig]:
    cfg = TrainConfig(**ckpt.config)
    model = init_params(cfg, ckpt.d_v, ckpt.d_e, np.random.default_rng(0))
    for name, p in model.named_parameters():
        if name not in ckpt.arrays:
            raise TrainingError(f"checkpoint missing parameter {name!r}")
        p.data = ckpt.arrays[name].astype(get_default_dtype())
    return model, cfg


# ---- training loop --------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_metric: float
    lr: float

    def csv_line(self) -> str:
        return f"{self.epoch},{self.train_loss!r},{self.val_metric!r},{self.lr!r}"


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list[EpochLog]


def _load_clips(manifest: Manifest) -> list[EmbeddingClip]:
    clips = [read_clip(e.path) for e in manifest]
    d_v, d_e = clips[0].d_v, clips[0].d_e
    for c in clips:
        if (c.d_v, c.d_e) != (d_v, d_e):
            raise ConfigError(
                f"inconsistent embedding dims: {c.clip_id} has "
                f"({c.d_v},{c.d_e}), expected ({d_v},{d_e})")
    return clips


def _stack(clips: list[EmbeddingClip]) -> tuple[Tensor, Tensor, np.ndarray]:
    dt = get_default_dtype()
    visual = Tensor(np.stack([c.visual for c in clips]).astype(dt))
    textual = Tensor(np.stack([c.textual for c in clips]).astype(dt))
    labels = np.array([c.label for c in clips], dtype=np.int64)
    return visual, textual, labels


def evaluate_scores(model: Model, clips: list[EmbeddingClip], t: int,
                    batch_size: int = 256,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Fake-class probability per clip; center-crop sampling unless rng given."""
    if rng is None:
        windows = [center_clip(c, t) for c in clips]
    else:
        windows = [sample_clip(c, t, rng) for c in clips]
    scores = np.empty(len(clips), dtype=np.float64)
    for lo in range(0, len(windows), batch_size):
        batch = windows[lo:lo + batch_size]
        visual, textual, _ = _stack(batch)
        probs = model.forward(visual, textual)
        scores[lo:lo + len(batch)] = probs.data[:, 1]
    return scores


def _val_metric(name: str, scores: np.ndarray, labels: np.ndarray) -> float:
    preds = [metrics.ScoredPrediction(str(i), float(s), int(l))
             for i, (s, l) in enumerate(zip(scores, labels))]
    if name == "auc":
        return metrics.auc(preds)
    if name == "acc":
        return metrics.accuracy(preds)
    p = np.clip(scores, 1e-7, 1 - 1e-7)
    return float(-np.mean(labels * np.log(p) + (1 - labels) * np.log(1 - p)))


def train(cfg: TrainConfig, train_manifest: Manifest, val_manifest: Manifest,
          log_fn=None) -> TrainResult:
    """Full training run; returns the best-validation checkpoint and the log."""
    train_clips = _load_clips(train_manifest)
    val_clips = _load_clips(val_manifest)
    labels = {c.label for c in train_clips}
    if labels != {0, 1}:
        raise ConfigError("training data must contain both classes")
    d_v, d_e = train_clips[0].d_v, train_clips[0].d_e
    if (val_clips[0].d_v, val_clips[0].d_e) != (d_v, d_e):
        raise ConfigError("validation embedding dims differ from training")
    variant = Variant.parse(cfg.variant)
    if variant not in (Variant.V_ONLY, Variant.T_ONLY) and d_v != d_e:
        raise ConfigError(
            f"similarity branch needs d_v == d_e, got {d_v} vs {d_e}")

    rng = np.random.default_rng(cfg.seed)
    model = init_params(cfg, d_v, d_e, rng)
    named = model.named_parameters()
    adam = AdamState()
    sched = PlateauScheduler(lr=cfg.lr, factor=cfg.scheduler_factor,
                             patience=cfg.scheduler_patience,
                             threshold=cfg.scheduler_threshold)
    val_labels = np.array([c.label for c in val_clips], dtype=np.int64)

    frozen = ([sample_clip(c, cfg.clip_len, rng) for c in train_clips]
              if cfg.freeze_clips else None)

    log: list[EpochLog] = []
    best_oriented = -math.inf
    best: Checkpoint | None = None
    for epoch in range(1, cfg.epochs + 1):
        windows = frozen if frozen is not None else [
            sample_clip(c, cfg.clip_len, rng) for c in train_clips]
        order = rng.permutation(len(windows))
        total_loss = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            batch = [windows[i] for i in idx]
            visual, textual, y = _stack(batch)
            for _, p in named:
                p.zero_grad()
            loss = model.loss(visual, textual, y)
            if not np.isfinite(loss.data).all():
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            loss.backward()
            adam_step(named, adam, sched.lr)
            total_loss += float(loss.data) * len(batch)
        train_loss = total_loss / len(order)

        scores = evaluate_scores(model, val_clips, cfg.clip_len, cfg.batch_size)
        val_value = _val_metric(cfg.val_metric, scores, val_labels)
        oriented = -val_value if cfg.val_metric == "loss" else val_value
        lr_before = sched.lr
        sched.step(oriented)
        if oriented > best_oriented:
            best_oriented = oriented
            best = Checkpoint(
                config=asdict(cfg), d_v=d_v, d_e=d_e, epoch=epoch,
                best_metric=val_value,
                arrays={n: p.data.copy() for n, p in named},
                adam_m={n: a.copy() for n, a in adam.m.items()},
                adam_v={n: a.copy() for n, a in adam.v.items()},
                adam_step_count=adam.step_count,
                scheduler={"lr": sched.lr, "best": sched.best,
                           "bad_epochs": sched.bad_epochs})
        entry = EpochLog(epoch, train_loss, val_value, lr_before)
        log.append(entry)
        if log_fn is not None:
            log_fn(entry)
    assert best is not None
    return TrainResult(checkpoint=best, log=log)
