"""Dataset manifests: class-per-folder scan, per-class cap, stratified split.

A manifest row is (clip path, label, duration). Labels are the immediate
subdirectory names, sorted; splitting happens at clip level so segments of
one recording never straddle train and validation.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import wav_duration_seconds
from .errors import ClassTooSmall, DataError, EmptyClass, EmptyDataset, UnreadableFile


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    duration_seconds: float


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]
    labels: tuple[str, ...]
    skipped: int = 0

    def by_class(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {label: [] for label in self.labels}
        for i, e in enumerate(self.entries):
            out[e.label].append(i)
        return out

    def class_counts(self) -> dict[str, int]:
        return {label: len(ix) for label, ix in self.by_class().items()}

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "label", "duration_seconds"])
            for e in self.entries:
                w.writerow([e.path, e.label, f"{e.duration_seconds:.6f}"])


def manifest_from_csv(path: str | Path) -> Manifest:
    entries = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            entries.append(
                ManifestEntry(row["path"], row["label"], float(row["duration_seconds"]))
            )
    labels = tuple(sorted({e.label for e in entries}))
    return Manifest(tuple(entries), labels)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[int, ...]
    val: tuple[int, ...]


def build_manifest(root: str | Path) -> Manifest:
    """Scan a class-per-folder tree of WAV files.

    Unreadable files are skipped with a warning and counted; empty class
    folders stay in the vocabulary (warned) so the class count matches the
    folder count. Nested subdirectories are ignored.
    """
    root = Path(root)
    if not root.is_dir():
        raise EmptyDataset(f"{root} is not a directory")
    labels = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not labels:
        raise EmptyDataset(f"{root} has no class folders")
    entries: list[ManifestEntry] = []
    skipped = 0
    for label in labels:
        files = sorted(
            p for p in (root / label).iterdir() if p.is_file() and p.suffix.lower() == ".wav"
        )
        if not files:
            warnings.warn(f"class folder {label!r} has no wav files", EmptyClass, stacklevel=2)
            continue
        for f in files:
            try:
                duration = wav_duration_seconds(f)
            except DataError as exc:
                warnings.warn(f"skipping {f}: {exc}", UnreadableFile, stacklevel=2)
                skipped += 1
                continue
            entries.append(ManifestEntry(str(f), label, duration))
    if not entries:
        raise EmptyDataset(f"no decodable wav files under {root}")
    return Manifest(tuple(entries), tuple(labels), skipped)


def cap_per_class(manifest: Manifest, cap: int = 40, seed: int = 0) -> Manifest:
    """Subsample classes larger than cap (uniform, without replacement)."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    rng = np.random.default_rng([seed, 0xCA9])
    by_class = manifest.by_class()
    keep: list[int] = []
    for label in manifest.labels:
        ix = by_class[label]
        if len(ix) > cap:
            chosen = rng.choice(len(ix), size=cap, replace=False)
            ix = [ix[i] for i in sorted(chosen)]
        keep.extend(ix)
    entries = tuple(manifest.entries[i] for i in sorted(keep))
    return Manifest(entries, manifest.labels, manifest.skipped)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_split(manifest: Manifest, val_fraction: float = 0.2, seed: int = 0) -> DatasetSplit:
    """Per-class shuffle-and-slice split at clip level.

    Each class sends round(count * val_fraction) clips to validation, at
    least 1 when the class has >= 2 clips and the fraction is positive, and
    always keeps at least 1 clip in train. Single-clip classes go entirely
    to train with a ClassTooSmall warning.
    """
    if not 0 <= val_fraction < 1:
        raise ValueError(f"val_fraction must be in [0, 1), got {val_fraction}")
    rng = np.random.default_rng([seed, 0x5B117])
    by_class = manifest.by_class()
    train: list[int] = []
    val: list[int] = []
    for label in manifest.labels:
        ix = by_class[label]
        if not ix:
            continue
        if len(ix) == 1:
            warnings.warn(
                f"class {label!r} has a single clip; validation will omit it",
                ClassTooSmall,
                stacklevel=2,
            )
            train.extend(ix)
            continue
        n_val = _round_half_up(len(ix) * val_fraction)
        if n_val == 0 and val_fraction > 0:
            n_val = 1
        n_val = min(n_val, len(ix) - 1)
        order = rng.permutation(len(ix))
        val.extend(ix[i] for i in order[:n_val])
        train.extend(ix[i] for i in order[n_val:])
    return DatasetSplit(tuple(sorted(train)), tuple(sorted(val)))


def batches(
    items: tuple[int, ...] | list[int],
    batch_size: int,
    seed: int = 0,
    epoch: int = 0,
    shuffle: bool = True,
) -> list[list[int]]:
    """Cut items into batches; the final partial batch is kept.

    Training batches reshuffle per epoch (epoch folds into the seed);
    validation passes shuffle=False and gets a stable order.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    items = list(items)
    if shuffle:
        order = np.random.default_rng([seed, epoch]).permutation(len(items))
        items = [items[i] for i in order]
    return [items[i : i + batch_size] for i in range(0, len(items), batch_size)]


def split_to_csv(split: DatasetSplit, manifest: Manifest, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    for name, indices in (("train", split.train), ("val", split.val)):
        with open(out_dir / f"split_{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "path", "label"])
            for i in indices:
                e = manifest.entries[i]
                w.writerow([i, e.path, e.label])


def split_from_csv(out_dir: str | Path) -> DatasetSplit:
    parts = []
    for name in ("train", "val"):
        with open(Path(out_dir) / f"split_{name}.csv", newline="") as fh:
            parts.append(tuple(int(row["index"]) for row in csv.DictReader(fh)))
    return DatasetSplit(parts[0], parts[1])


def histogram_to_csv(manifest: Manifest, path: str | Path) -> None:
    """Class-distribution histogram: label,count rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "count"])
        for label, n in manifest.class_counts().items():
            w.writerow([label, n])
