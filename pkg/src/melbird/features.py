"""Clip-to-image feature extraction and the on-disk image cache.

Cache layout (integers little-endian uint64): magic b"MELIMG01", record
count, then per record: id length, id bytes (utf-8), height, width, raw
float64 pixels. Records are keyed by segment id (``<clip>#<offset>``).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import audio, dsp
from .errors import CorruptHeader
from .train import ExampleSet, SplitData

MAGIC = b"MELIMG01"


def clip_to_images(
    path: str | Path,
    params: dsp.MelParams | None = None,
    window_seconds: float = 10.0,
    hop_seconds: float = 5.0,
    image_size: int = dsp.IMAGE_SIZE,
    clip_id: str | None = None,
) -> list[tuple[str, np.ndarray]]:
    """decode -> resample -> segment -> mel -> image, one image per segment."""
    params = params or dsp.MelParams()
    clip = audio.resample(audio.decode(path), params.sample_rate)
    segments = audio.segment(clip, window_seconds, hop_seconds,
                             clip_id=clip_id if clip_id is not None else str(path))
    return [
        (s.segment_id, dsp.to_image(dsp.mel_spectrogram(s, params), image_size).pixels)
        for s in segments
    ]


def write_cache(path: str | Path, items: list[tuple[str, np.ndarray]]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(items)))
        for key, img in items:
            encoded = key.encode("utf-8")
            arr = np.ascontiguousarray(img, dtype="<f8")
            fh.write(struct.pack("<Q", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<QQ", *arr.shape))
            fh.write(arr.tobytes())


def read_cache(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise CorruptHeader(f"{path}: not an image cache")
    (count,) = struct.unpack_from("<Q", raw, 8)
    pos = 16
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (key_len,) = struct.unpack_from("<Q", raw, pos)
            pos += 8
            key = raw[pos : pos + key_len].decode("utf-8")
            pos += key_len
            h, w = struct.unpack_from("<QQ", raw, pos)
            pos += 16
            arr = np.frombuffer(raw, dtype="<f8", count=h * w, offset=pos).reshape(h, w)
            pos += 8 * h * w
            out[key] = arr.copy()
    except (struct.error, ValueError) as exc:
        raise CorruptHeader(f"{path}: truncated image cache") from exc
    return out


def clip_of_key(key: str) -> str:
    return key.rsplit("#", 1)[0]


def build_example_sets(manifest, split, cache: dict[str, np.ndarray]) -> SplitData:
    """Expand a clip-level split into segment-level example sets."""
    by_clip: dict[str, list[np.ndarray]] = {}
    for key, img in cache.items():
        by_clip.setdefault(clip_of_key(key), []).append(img)
    label_index = {label: i for i, label in enumerate(manifest.labels)}

    def collect(indices) -> ExampleSet:
        images, labels = [], []
        for i in indices:
            entry = manifest.entries[i]
            for img in by_clip.get(entry.path, []):
                images.append(img)
                labels.append(label_index[entry.label])
        if not images:
            return ExampleSet(np.zeros((0, 1, 1)), np.zeros(0, dtype=np.int64),
                              len(manifest.labels))
        return ExampleSet(np.stack(images), np.asarray(labels, dtype=np.int64),
                          len(manifest.labels))

    return SplitData(train=collect(split.train), val=collect(split.val))
