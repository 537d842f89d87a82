"""Mel-spectrogram feature extraction: STFT, filterbank, dB scaling, imaging.

A 10 s segment at 32 kHz with the default parameters becomes a 128x1001 dB
matrix, then a 224x224 image normalized to [0, 1].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import Segment
from .errors import AllZeroInput, DegenerateBand, SegmentTooShort

IMAGE_SIZE = 224


@dataclass(frozen=True)
class MelParams:
    n_mels: int = 128
    f_min: float = 20.0
    f_max: float = 16000.0
    sample_rate: int = 32000
    n_fft: int = 512
    hop_length: int = 320
    window: str = "hann"
    top_db: float = 80.0

    def __post_init__(self):
        if not 0 <= self.f_min < self.f_max <= self.sample_rate / 2:
            raise ValueError("need 0 <= f_min < f_max <= sample_rate/2")
        if self.n_fft <= 0 or self.n_fft & (self.n_fft - 1):
            raise ValueError(f"n_fft must be a power of two, got {self.n_fft}")
        if not 0 < self.hop_length <= self.n_fft:
            raise ValueError("need 0 < hop_length <= n_fft")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1


@dataclass(frozen=True)
class MelSpectrogram:
    """dB-scaled mel matrix [n_mels x n_frames], max referenced to 0 dB."""

    values: np.ndarray
    params: MelParams


@dataclass(frozen=True)
class SpectrogramImage:
    """Square image in [0, 1] ready for a model."""

    pixels: np.ndarray


def hz_to_mel(f):
    """HTK mel scale: 2595 * log10(1 + f/700). Maps 1000 Hz to ~1000 mel."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    """Inverse of hz_to_mel."""
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _samples_of(segment) -> np.ndarray:
    if isinstance(segment, Segment):
        return segment.samples
    return np.asarray(segment, dtype=np.float64)


def stft_power(segment, params: MelParams) -> np.ndarray:
    """Power spectrogram [n_fft/2+1 x n_frames] of a segment.

    Frames are centered: the signal is reflect-padded by n_fft/2 on both
    ends, windowed with a periodic Hann, and transformed with a one-sided
    DFT. n_frames = floor(len/hop) + 1.
    """
    x = _samples_of(segment)
    if len(x) < params.n_fft:
        raise SegmentTooShort(f"{len(x)} samples < n_fft {params.n_fft}")
    pad = params.n_fft // 2
    padded = np.pad(x, pad, mode="reflect")
    n_frames = len(x) // params.hop_length + 1
    frames = np.lib.stride_tricks.sliding_window_view(padded, params.n_fft)
    frames = frames[:: params.hop_length][:n_frames]
    spec = np.fft.rfft(frames * _hann_periodic(params.n_fft), axis=1)
    return (spec.real**2 + spec.imag**2).T


def mel_filterbank(params: MelParams) -> np.ndarray:
    """Triangular mel filterbank [n_mels x n_bins].

    Filter centers are uniformly spaced on the mel axis between f_min and
    f_max; each triangle spans its two neighbours' centers. A bin's weight
    is the triangle's average response over that bin's frequency interval
    rather than a point sample at the bin center, so narrow low-frequency
    filters keep nonzero support even when they fit between bin centers.
    """
    grid = mel_to_hz(np.linspace(hz_to_mel(params.f_min), hz_to_mel(params.f_max), params.n_mels + 2))
    df = params.sample_rate / params.n_fft
    nyquist = params.sample_rate / 2.0
    lo_edges = np.clip(np.arange(params.n_bins) * df - df / 2.0, 0.0, nyquist)
    hi_edges = np.clip(np.arange(params.n_bins) * df + df / 2.0, 0.0, nyquist)
    widths = hi_edges - lo_edges

    def ramp_integral(a, b, f0, f1):
        # integral of (f - f0)/(f1 - f0) over [a, b] clipped to [f0, f1]
        lo = np.clip(a, f0, f1)
        hi = np.clip(b, f0, f1)
        return np.maximum(0.0, (hi - f0) ** 2 - (lo - f0) ** 2) / (2.0 * (f1 - f0))

    fb = np.zeros((params.n_mels, params.n_bins))
    for j in range(params.n_mels):
        fl, fc, fr = grid[j], grid[j + 1], grid[j + 2]
        up = ramp_integral(lo_edges, hi_edges, fl, fc)
        down = ramp_integral(2 * fr - hi_edges, 2 * fr - lo_edges, fr, 2 * fr - fc)
        fb[j] = (up + down) / np.maximum(widths, 1e-300)
        if not fb[j].any():
            raise DegenerateBand(f"mel filter {j} has no spectral support")
    return fb


def power_to_db(power: np.ndarray, top_db: float = 80.0) -> np.ndarray:
    """10*log10(p/ref) with ref = global max, clamped to >= -top_db.

    The global maximum maps to 0 dB. An all-zero matrix triggers the
    AllZeroInput warning and comes back uniformly at -top_db.
    """
    power = np.asarray(power, dtype=np.float64)
    if np.any(power < 0):
        raise ValueError("power values must be nonnegative")
    eps = 1e-10
    ref = power.max() if power.size else 0.0
    if ref <= 0.0:
        warnings.warn("all-zero power matrix", AllZeroInput, stacklevel=2)
        return np.full(power.shape, -top_db)
    db = 10.0 * np.log10(np.maximum(power, eps)) - 10.0 * np.log10(max(ref, eps))
    return np.maximum(db, -top_db)


def mel_spectrogram(segment, params: MelParams | None = None) -> MelSpectrogram:
    """Full feature path: STFT power -> mel projection -> dB."""
    params = params or MelParams()
    mel_power = mel_filterbank(params) @ stft_power(segment, params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AllZeroInput)
        db = power_to_db(mel_power, top_db=params.top_db)
    return MelSpectrogram(values=db, params=params)


def _resize_axis(mat: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = mat.shape[axis]
    if n_in == 1:
        return np.repeat(mat, n_out, axis=axis)
    pos = np.linspace(0.0, n_in - 1.0, n_out)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    w = pos - lo
    a = np.take(mat, lo, axis=axis)
    b = np.take(mat, hi, axis=axis)
    shape = [1, 1]
    shape[axis] = n_out
    w = w.reshape(shape)
    return a * (1.0 - w) + b * w


def bilinear_resize(mat: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Separable bilinear resize with corner-aligned sampling."""
    return _resize_axis(_resize_axis(mat, out_shape[0], 0), out_shape[1], 1)


def to_image(spec: MelSpectrogram, size: int = IMAGE_SIZE) -> SpectrogramImage:
    """Resize the dB matrix to size x size and min-max normalize to [0, 1].

    A constant matrix maps to all 0.5 (normalization would divide by zero).
    """
    if spec.values.size == 0:
        raise ValueError("empty spectrogram")
    resized = bilinear_resize(spec.values, (size, size))
    lo, hi = resized.min(), resized.max()
    if hi == lo:
        return SpectrogramImage(pixels=np.full((size, size), 0.5))
    return SpectrogramImage(pixels=(resized - lo) / (hi - lo))


def save_pgm(image: SpectrogramImage, path: str | Path) -> None:
    """Export as binary PGM (P5, 8-bit) for eyeballing features."""
    px = np.round(255.0 * image.pixels).astype(np.uint8)
    header = f"P5 {px.shape[1]} {px.shape[0]} 255\n".encode()
    Path(path).write_bytes(header + px.tobytes())
