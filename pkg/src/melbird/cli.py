"""Command-line pipeline: manifest, features, train, eval, predict, synth,
compare.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numeric
divergence. Every command is deterministic given the same inputs and seed
(wall-clock columns aside).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import dsp, features, metrics, synth
from .config import RunConfig, load_config_file, write_config_file
from .errors import ConfigError, DataError, NumericError
from .serialize import load_weights, save_weights
from .train import model_functions, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we want exit 1
        raise UsageError(message)


def build_parser() -> _Parser:
    p = _Parser(prog="melbird", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("manifest", help="scan a class-per-folder tree, cap, and split")
    sp.add_argument("root", help="dataset root (one folder per class)")
    sp.add_argument("--out", required=True, help="output directory for CSVs")
    sp.add_argument("--config", help="config file")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--cap", type=int)
    sp.add_argument("--val-fraction", type=float)

    sp = sub.add_parser("features", help="extract mel-spectrogram images into a cache")
    sp.add_argument("manifest", help="manifest CSV from the manifest command")
    sp.add_argument("--out", required=True, help="output directory for features.bin")
    sp.add_argument("--config", help="config file")
    sp.add_argument("--export-pgm", metavar="DIR", help="also dump one PGM per segment")

    sp = sub.add_parser("train", help="train one backbone on cached features")
    sp.add_argument("--out", required=True, help="run directory with manifest/split/features")
    sp.add_argument("--config", help="config file")
    sp.add_argument("--model", choices=("ast", "cnn"))
    sp.add_argument("--seed", type=int)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    sp.add_argument("checkpoint", help="weight file written by train")
    sp.add_argument("--out", required=True, help="run directory with manifest/split/features")
    sp.add_argument("--split", choices=("train", "val"), default="val")

    sp = sub.add_parser("predict", help="top-k class probabilities for one audio file")
    sp.add_argument("checkpoint", help="weight file written by train")
    sp.add_argument("audio", help="WAV file")
    sp.add_argument("--topk", type=int, default=5)

    sp = sub.add_parser("synth", help="generate a synthetic class-per-folder dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--classes", type=int, default=8)
    sp.add_argument("--clips", type=int, default=40)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("compare", help="train both backbones and tabulate the outcome")
    sp.add_argument("--out", required=True, help="run directory with manifest/split/features")
    sp.add_argument("--config", help="config file")
    sp.add_argument("--seed", type=int)
    return p


def _run_config(args) -> RunConfig:
    rc = RunConfig(load_config_file(args.config) if getattr(args, "config", None) else {})
    if getattr(args, "seed", None) is not None:
        rc.override("train.seed", args.seed)
    return rc


def _audio_windows(rc: RunConfig) -> tuple[float, float]:
    return rc.get("audio.window_seconds", 10.0), rc.get("audio.hop_seconds", 5.0)


def cmd_manifest(args) -> int:
    rc = _run_config(args)
    if args.cap is not None:
        rc.override("data.cap", args.cap)
    if args.val_fraction is not None:
        rc.override("data.val_fraction", args.val_fraction)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = rc.get("train.seed", 0)
    manifest = data_mod.build_manifest(args.root)
    capped = data_mod.cap_per_class(manifest, cap=rc.get("data.cap", 40), seed=seed)
    split = data_mod.stratified_split(capped, val_fraction=rc.get("data.val_fraction", 0.2),
                                      seed=seed)
    capped.to_csv(out / "manifest.csv")
    data_mod.split_to_csv(split, capped, out)
    data_mod.histogram_to_csv(capped, out / "histogram.csv")
    print(f"labels: {len(capped.labels)}  clips: {len(capped.entries)}  "
          f"skipped: {capped.skipped}")
    print(f"train clips: {len(split.train)}  val clips: {len(split.val)}")
    return 0


def cmd_features(args) -> int:
    rc = _run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = data_mod.manifest_from_csv(args.manifest)
    params = rc.mel_params()
    window, hop = _audio_windows(rc)
    items: list[tuple[str, np.ndarray]] = []
    for entry in manifest.entries:
        items.extend(features.clip_to_images(entry.path, params, window, hop))
    features.write_cache(out / "features.bin", items)
    if args.export_pgm:
        pgm_dir = Path(args.export_pgm)
        pgm_dir.mkdir(parents=True, exist_ok=True)
        for i, (key, img) in enumerate(items):
            dsp.save_pgm(dsp.SpectrogramImage(img), pgm_dir / f"segment{i:05d}.pgm")
    print(f"cached {len(items)} images from {len(manifest.entries)} clips")
    return 0


def _load_artifacts(out_dir: Path):
    manifest = data_mod.manifest_from_csv(out_dir / "manifest.csv")
    split = data_mod.split_from_csv(out_dir)
    cache = features.read_cache(out_dir / "features.bin")
    return manifest, split, cache


def _train_one(kind: str, rc: RunConfig, split_data, labels, out: Path):
    model_cfg = rc.model_config(kind, num_classes=len(labels))
    weights, log = train(kind, split_data, rc.train_config(), model_cfg)
    save_weights(out / f"model-{kind}.weights", weights)
    write_config_file(out / f"model-{kind}.cfg",
                      _checkpoint_values(rc, kind, model_cfg, labels))
    log.to_csv(out / f"training_log_{kind}.csv")
    return weights, log


def _checkpoint_values(rc: RunConfig, kind: str, model_cfg, labels) -> dict[str, object]:
    values = rc.checkpoint_values(kind, model_cfg, labels)
    params = rc.mel_params()
    window, hop = _audio_windows(rc)
    values.update({
        "mel.n_mels": params.n_mels, "mel.f_min": params.f_min, "mel.f_max": params.f_max,
        "mel.sample_rate": params.sample_rate, "mel.n_fft": params.n_fft,
        "mel.hop_length": params.hop_length, "mel.window": params.window,
        "mel.top_db": params.top_db,
        "audio.window_seconds": window, "audio.hop_seconds": hop,
    })
    return values


def cmd_train(args) -> int:
    rc = _run_config(args)
    kind = args.model or rc.get("model.type", "ast")
    out = Path(args.out)
    manifest, split, cache = _load_artifacts(out)
    split_data = features.build_example_sets(manifest, split, cache)
    weights, log = _train_one(kind, rc, split_data, manifest.labels, out)
    best = log.records[log.best_epoch() - 1]
    print(f"{kind}: trained {len(log.records)} epochs, best epoch {best.epoch} "
          f"(val loss {best.val_loss:.6f}, val macro F1 {best.val_macro_f1:.4f})")
    return 0


def _load_checkpoint(checkpoint: str):
    cfg_path = Path(checkpoint).with_suffix(".cfg")
    if not cfg_path.exists():
        raise ConfigError(f"missing checkpoint config {cfg_path}")
    rc = RunConfig(load_config_file(cfg_path))
    kind = rc.get("model.type")
    labels = [s for s in str(rc.get("data.labels", "")).split(",") if s]
    if kind not in ("ast", "cnn") or not labels:
        raise ConfigError(f"{cfg_path} lacks model.type or data.labels")
    model_cfg = rc.model_config(kind)
    weights = load_weights(checkpoint, requires_grad=False)
    return rc, kind, labels, model_cfg, weights


def cmd_eval(args) -> int:
    _, kind, labels, model_cfg, weights = _load_checkpoint(args.checkpoint)
    out = Path(args.out)
    manifest, split, cache = _load_artifacts(out)
    if list(manifest.labels) != labels:
        raise ConfigError(
            f"checkpoint has {len(labels)} classes but the dataset has "
            f"{len(manifest.labels)}; label vocabularies must match"
        )
    split_data = features.build_example_sets(manifest, split, cache)
    examples = split_data.train if args.split == "train" else split_data.val
    _, forward = model_functions(kind, model_cfg)
    probs = np.concatenate(
        [forward(examples.images[i], weights).data for i in range(len(examples))], axis=0
    )
    targets = examples.one_hot(range(len(examples)))
    report = metrics.build_report(probs, targets, labels=labels)
    report_path = out / f"metrics_{kind}_{args.split}.csv"
    report.to_csv(report_path)
    print(f"{kind} {args.split}: macro F1 {report.macro_f1:.4f}  "
          f"samples F1 {report.samples_f1:.4f}  ({report_path})")
    return 0


def cmd_predict(args) -> int:
    rc, kind, labels, model_cfg, weights = _load_checkpoint(args.checkpoint)
    params = rc.mel_params()
    window, hop = _audio_windows(rc)
    images = features.clip_to_images(args.audio, params, window, hop)
    _, forward = model_functions(kind, model_cfg)
    probs = np.mean([forward(img, weights).data[0] for _, img in images], axis=0)
    k = max(1, min(args.topk, len(labels)))
    for idx in np.argsort(-probs)[:k]:
        print(f"{labels[idx]}\t{probs[idx]:.6f}")
    return 0


def cmd_synth(args) -> int:
    synth.make_dataset(args.out, args.classes, args.clips, seed=args.seed)
    print(f"wrote {args.classes} classes x {args.clips} clips under {args.out}")
    return 0


def cmd_compare(args) -> int:
    rc = _run_config(args)
    out = Path(args.out)
    manifest, split, cache = _load_artifacts(out)
    split_data = features.build_example_sets(manifest, split, cache)
    rows = []
    for kind in ("ast", "cnn"):
        _, log = _train_one(kind, rc, split_data, manifest.labels, out)
        best = log.records[log.best_epoch() - 1]
        rows.append({
            "model": kind,
            "train_macro_f1": best.train_macro_f1,
            "val_macro_f1": best.val_macro_f1,
            "train_samples_f1": best.train_samples_f1,
            "val_samples_f1": best.val_samples_f1,
            "train_loss": best.train_loss,
            "val_loss": best.val_loss,
            "total_seconds": log.total_seconds(),
        })
    table = metrics.format_comparison_table(rows)
    (out / "comparison.txt").write_text(table)
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    print(table, end="")
    return 0


_COMMANDS = {
    "manifest": cmd_manifest,
    "features": cmd_features,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "synth": cmd_synth,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
