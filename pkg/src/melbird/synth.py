"""Synthetic birdcall-like dataset generator.

Each class owns a disjoint frequency band between 500 and 8000 Hz and emits
linear sweeps through that band with random phase, duration, and white
noise at 20 dB SNR. Classes are separable by construction, which makes the
generated trees suitable for end-to-end pipeline checks.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio import write_wav

SAMPLE_RATE = 32000
F_LOW = 500.0
F_HIGH = 8000.0
SNR_DB = 20.0
AMPLITUDE = 0.5
MIN_SECONDS = 3.0
MAX_SECONDS = 15.0


def class_band(class_index: int, n_classes: int) -> tuple[float, float]:
    """The [low, high] Hz band owned by a class, with a 10% guard margin."""
    width = (F_HIGH - F_LOW) / n_classes
    lo = F_LOW + class_index * width
    return lo + 0.1 * width, lo + 0.9 * width


def make_clip(rng: np.random.Generator, class_index: int, n_classes: int) -> np.ndarray:
    f0, f1 = class_band(class_index, n_classes)
    duration = rng.uniform(MIN_SECONDS, MAX_SECONDS)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    n = int(round(duration * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    sweep = AMPLITUDE * np.sin(2.0 * np.pi * (f0 * t + (f1 - f0) * t**2 / (2.0 * duration)) + phase)
    noise_std = (AMPLITUDE / np.sqrt(2.0)) / (10.0 ** (SNR_DB / 20.0))
    return np.clip(sweep + rng.normal(0.0, noise_std, size=n), -1.0, 1.0)


def make_dataset(out_dir: str | Path, n_classes: int, clips_per_class: int, seed: int = 0) -> Path:
    """Write a class-per-folder WAV tree; deterministic per seed."""
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    if clips_per_class < 1:
        raise ValueError("need at least 1 clip per class")
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    for c in range(n_classes):
        folder = out_dir / f"species{c:02d}"
        folder.mkdir(parents=True, exist_ok=True)
        for k in range(clips_per_class):
            write_wav(folder / f"clip{k:03d}.wav", make_clip(rng, c, n_classes), SAMPLE_RATE)
    return out_dir
