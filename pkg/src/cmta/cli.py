"""Command-line surface: gen-synthetic, train, eval, predict, dump-features,
validate-data.

Every run writes an effective-config record next to its outputs so it can be
reproduced from that file alone. Exit codes: 0 ok, 1 data invalid, 2 config
error, 3 I/O or data error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import metrics
from .data import (ClipLoadError, Manifest, ManifestError, center_clip,
                   load_manifest, read_clip, sample_clip)
from .synth import SynthConfig, gen_dataset
from .tensor import ShapeError, Tensor, get_default_dtype
from .train import (Checkpoint, ConfigError, TrainConfig, TrainingError,
                    load_checkpoint, model_from_checkpoint, save_checkpoint,
                    train)

EXIT_OK = 0
EXIT_INVALID_DATA = 1
EXIT_CONFIG = 2
EXIT_IO = 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read_kv_config(path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise CliError(EXIT_IO, f"config file not found: {path}")
    out: dict[str, str] = {}
    for line_no, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(EXIT_CONFIG, f"{path}:{line_no}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce_config(cls, raw: dict[str, str], overrides: dict):
    """Build a config dataclass from key=value strings plus typed overrides."""
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    kwargs: dict = {}
    for key, value in raw.items():
        if key not in types:
            raise CliError(EXIT_CONFIG,
                           f"unknown config key {key!r} for {cls.__name__}")
        t = types[key]
        try:
            if t in ("int", int):
                kwargs[key] = int(value)
            elif t in ("float", float):
                kwargs[key] = float(value)
            elif t in ("bool", bool):
                kwargs[key] = value.lower() in ("1", "true", "yes")
            else:
                kwargs[key] = value
        except ValueError:
            raise CliError(EXIT_CONFIG,
                           f"bad value for config key {key!r}: {value!r}") from None
    for key, value in overrides.items():
        if value is not None:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (ConfigError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc


def _write_config_record(path: Path, config, extra: dict) -> None:
    lines = [f"{k}={v}" for k, v in sorted(extra.items())]
    lines += [f"{f.name}={getattr(config, f.name)}"
              for f in dataclasses.fields(config)]
    path.write_text("\n".join(lines) + "\n")


def _load_manifest_or_die(path) -> Manifest:
    try:
        return load_manifest(path)
    except ManifestError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc


def _checkpoint_and_model(args) -> tuple[Checkpoint, "object", TrainConfig]:
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise CliError(EXIT_IO, f"checkpoint not found: {ckpt_path}")
    try:
        ckpt = load_checkpoint(ckpt_path)
        model, cfg = model_from_checkpoint(ckpt)
    except (TrainingError, ConfigError) as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    return ckpt, model, cfg


def _check_dims(ckpt: Checkpoint, clip) -> None:
    if (clip.d_v, clip.d_e) != (ckpt.d_v, ckpt.d_e):
        raise CliError(
            EXIT_CONFIG,
            f"embedding dims mismatch: checkpoint expects d_v={ckpt.d_v}, "
            f"d_e={ckpt.d_e}; {clip.clip_id} has d_v={clip.d_v}, d_e={clip.d_e}")


def _score_manifest(model, ckpt, cfg, manifest, random_eval: bool, seed: int):
    rng = np.random.default_rng(seed) if random_eval else None
    rows = []
    for entry in manifest:
        try:
            clip = read_clip(entry.path)
        except ClipLoadError as exc:
            raise CliError(EXIT_IO, str(exc)) from exc
        _check_dims(ckpt, clip)
        window = (sample_clip(clip, cfg.clip_len, rng) if rng is not None
                  else center_clip(clip, cfg.clip_len))
        dt = get_default_dtype()
        probs = model.forward(Tensor(window.visual[None].astype(dt)),
                              Tensor(window.textual[None].astype(dt)))
        rows.append((entry, float(probs.data[0, 1])))
    return rows


# ---- subcommands -----------------------------------------------------------

def cmd_gen_synthetic(args) -> int:
    raw = _read_kv_config(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in
                 ("d", "clip_len", "n_per_class", "mu", "a_real", "a_fake",
                  "noise", "seed", "subset")}
    cfg = _coerce_config(SynthConfig, raw, overrides)
    out_dir = Path(args.out)
    try:
        _, manifest_path = gen_dataset(cfg, out_dir)
    except OSError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    _write_config_record(out_dir / "gen_config.txt", cfg,
                         {"command": "gen-synthetic", "out": out_dir})
    print(f"wrote {2 * cfg.n_per_class} clips and {manifest_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    raw = _read_kv_config(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in
                 ("epochs", "batch_size", "lr", "clip_len", "hidden",
                  "model_dim", "layers", "heads", "variant", "seed",
                  "val_metric", "val_split")}
    if args.freeze_clips:
        overrides["freeze_clips"] = True
    cfg = _coerce_config(TrainConfig, raw, overrides)
    train_manifest = _load_manifest_or_die(args.train_manifest)
    if args.val_manifest:
        val_manifest = _load_manifest_or_die(args.val_manifest)
    else:
        from .data import split
        split_rng = np.random.default_rng(cfg.seed)
        train_manifest, val_manifest = split(train_manifest, cfg.val_split,
                                             split_rng)
        print(f"split: {len(train_manifest)} train / {len(val_manifest)} val")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "log.csv"
    _write_config_record(out_dir / "config.txt", cfg, {
        "command": "train",
        "train_manifest": Path(args.train_manifest).resolve(),
        "val_manifest": Path(args.val_manifest).resolve() if args.val_manifest else "",
        "out": out_dir})
    with open(log_path, "w") as log_fh:
        log_fh.write("epoch,train_loss,val_metric,lr\n")

        def on_epoch(entry):
            log_fh.write(entry.csv_line() + "\n")
            log_fh.flush()
            print(f"epoch {entry.epoch}: loss={entry.train_loss:.6f} "
                  f"val_{cfg.val_metric}={entry.val_metric:.6f} lr={entry.lr:g}")

        try:
            result = train(cfg, train_manifest, val_manifest, log_fn=on_epoch)
        except ConfigError as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from exc
        except (ManifestError, ClipLoadError, TrainingError) as exc:
            raise CliError(EXIT_IO, str(exc)) from exc
    ckpt_path = out_dir / "checkpoint.cmtk"
    save_checkpoint(result.checkpoint, ckpt_path)
    print(f"best epoch {result.checkpoint.epoch} "
          f"({cfg.val_metric}={result.checkpoint.best_metric:.6f}); "
          f"checkpoint at {ckpt_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt, model, cfg = _checkpoint_and_model(args)
    manifest = _load_manifest_or_die(args.manifest)
    rows = _score_manifest(model, ckpt, cfg, manifest, args.random_eval,
                           args.seed or 0)
    by_subset: dict[str, list[metrics.ScoredPrediction]] = {}
    for entry, score in rows:
        by_subset.setdefault(entry.subset, []).append(
            metrics.ScoredPrediction(entry.clip_id, score, entry.label))
    report = metrics.per_subset_report(
        by_subset, warn=lambda msg: print(f"warning: {msg}", file=sys.stderr))
    text = metrics.render_report_csv(report)
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    ckpt, model, cfg = _checkpoint_and_model(args)
    manifest = _load_manifest_or_die(args.manifest)
    rows = _score_manifest(model, ckpt, cfg, manifest, args.random_eval,
                           args.seed or 0)
    lines = ["clip_id,p_fake,label"]
    lines += [f"{e.clip_id},{score!r},{e.label}" for e, score in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return EXIT_OK


def cmd_dump_features(args) -> int:
    ckpt, model, cfg = _checkpoint_and_model(args)
    manifest = _load_manifest_or_die(args.manifest)
    dt = get_default_dtype()
    lines = []
    width = None
    for entry in manifest:
        try:
            clip = read_clip(entry.path)
        except ClipLoadError as exc:
            raise CliError(EXIT_IO, str(exc)) from exc
        _check_dims(ckpt, clip)
        window = center_clip(clip, cfg.clip_len)
        feats = model.features(Tensor(window.visual[None].astype(dt)),
                               Tensor(window.textual[None].astype(dt)))
        vec = feats.data[0]
        if width is None:
            width = len(vec)
            lines.append("clip_id,label," + ",".join(f"f{i}" for i in range(width)))
        lines.append(f"{entry.clip_id},{entry.label}," +
                     ",".join(repr(float(x)) for x in vec))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return EXIT_OK


def cmd_validate_data(args) -> int:
    try:
        manifest = load_manifest(args.manifest, check_files=False)
    except ManifestError as exc:
        print(f"invalid manifest: {exc}", file=sys.stderr)
        return EXIT_INVALID_DATA
    counts = {0: 0, 1: 0}
    dims: set[tuple[int, int]] = set()
    frame_hist: dict[int, int] = {}
    failures = 0
    for entry in manifest:
        try:
            clip = read_clip(entry.path)
        except (ClipLoadError, OSError) as exc:
            print(f"INVALID {entry.path}: {exc}", file=sys.stderr)
            failures += 1
            continue
        counts[entry.label] += 1
        dims.add((clip.d_v, clip.d_e))
        frame_hist[clip.n_frames] = frame_hist.get(clip.n_frames, 0) + 1
    print(f"clips: {len(manifest)} ({counts[0]} real, {counts[1]} fake), "
          f"{failures} invalid")
    print("frame counts: " + ", ".join(
        f"{n}x{frame_hist[n]}" for n in sorted(frame_hist)))
    if len(dims) > 1:
        print(f"warning: inconsistent embedding dims across files: {sorted(dims)}")
    elif dims:
        d_v, d_e = next(iter(dims))
        print(f"dims: d_v={d_v} d_e={d_e}")
    return EXIT_INVALID_DATA if failures else EXIT_OK


# ---- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmta",
        description="Cross-modal temporal artifact detector for AI-generated "
                    "video, over per-frame visual/textual embedding pairs.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="generate a labeled synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--config")
    g.add_argument("--d", type=int)
    g.add_argument("--clip-len", dest="clip_len", type=int)
    g.add_argument("--n-per-class", dest="n_per_class", type=int)
    g.add_argument("--mu", type=float)
    g.add_argument("--a-real", dest="a_real", type=float)
    g.add_argument("--a-fake", dest="a_fake", type=float)
    g.add_argument("--noise", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--subset")
    g.set_defaults(fn=cmd_gen_synthetic)

    t = sub.add_parser("train", help="train a detector")
    t.add_argument("--train-manifest", required=True)
    t.add_argument("--val-manifest")
    t.add_argument("--val-split", dest="val_split", type=float)
    t.add_argument("--out", required=True)
    t.add_argument("--config")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--clip-len", dest="clip_len", type=int)
    t.add_argument("--hidden", type=int)
    t.add_argument("--model-dim", dest="model_dim", type=int)
    t.add_argument("--layers", type=int)
    t.add_argument("--heads", type=int)
    t.add_argument("--variant",
                   choices=["full", "v-only", "t-only", "vt-cgtm", "vt-fgtm"])
    t.add_argument("--seed", type=int)
    t.add_argument("--val-metric", dest="val_metric",
                   choices=["auc", "acc", "loss"])
    t.add_argument("--freeze-clips", action="store_true")
    t.set_defaults(fn=cmd_train)

    for name, fn in (("eval", cmd_eval), ("predict", cmd_predict),
                     ("dump-features", cmd_dump_features)):
        p = sub.add_parser(name)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--manifest", required=True)
        p.add_argument("--out")
        p.add_argument("--random-eval", action="store_true")
        p.add_argument("--seed", type=int)
        p.set_defaults(fn=fn)

    v = sub.add_parser("validate-data", help="check every file in a manifest")
    v.add_argument("--manifest", required=True)
    v.set_defaults(fn=cmd_validate_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ManifestError, ClipLoadError, TrainingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
