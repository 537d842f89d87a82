"""WAV decoding, resampling, and fixed-length segmentation.

The decoder handles RIFF/WAVE containers with integer PCM (8/16/24/32 bit)
or 32-bit float payloads, mono or stereo. Everything downstream works on
float64 mono waveforms in [-1, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptHeader, EmptyAudio, UnsupportedFormat

WAVE_FORMAT_PCM = 1
WAVE_FORMAT_IEEE_FLOAT = 3
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioClip:
    """Decoded mono waveform. Samples are float64 in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class Segment:
    """Fixed-length window cut (or tiled) from a clip."""

    samples: np.ndarray
    source_clip_id: str
    offset_seconds: float

    @property
    def segment_id(self) -> str:
        return f"{self.source_clip_id}#{self.offset_seconds:g}"


def _read_chunks(raw: bytes) -> dict[bytes, bytes]:
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise CorruptHeader("not a RIFF/WAVE file")
    chunks: dict[bytes, bytes] = {}
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            if cid == b"data":
                # tolerate a truncated final data chunk only if non-empty
                if not body:
                    raise CorruptHeader("truncated data chunk")
            else:
                raise CorruptHeader(f"truncated {cid!r} chunk")
        if cid not in chunks:
            chunks[cid] = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    return chunks


def _parse_fmt(fmt: bytes) -> tuple[int, int, int, int]:
    if len(fmt) < 16:
        raise CorruptHeader("fmt chunk shorter than 16 bytes")
    code, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if code == WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 40:
            raise CorruptHeader("extensible fmt chunk shorter than 40 bytes")
        # first two bytes of the SubFormat GUID carry the real format code
        (code,) = struct.unpack_from("<H", fmt, 24)
    return code, channels, rate, bits


def decode(path: str | Path) -> AudioClip:
    """Decode a PCM WAV file to a normalized mono clip.

    Stereo is averaged to mono. Integer samples are scaled by the type's
    magnitude (e.g. int16 by 1/32768) so output lies in [-1, 1]; float
    payloads are clipped to that range.

    Raises UnsupportedFormat, CorruptHeader, or EmptyAudio.
    """
    raw = Path(path).read_bytes()
    chunks = _read_chunks(raw)
    if b"fmt " not in chunks or b"data" not in chunks:
        raise CorruptHeader("missing fmt or data chunk")
    code, channels, rate, bits = _parse_fmt(chunks[b"fmt "])
    if rate <= 0:
        raise CorruptHeader(f"invalid sample rate {rate}")
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{channels} channels (mono or stereo only)")
    data = chunks[b"data"]

    if code == WAVE_FORMAT_PCM:
        if bits == 8:
            x = np.frombuffer(data, dtype=np.uint8).astype(np.float64)
            x = (x - 128.0) / 128.0
        elif bits == 16:
            x = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
        elif bits == 24:
            usable = len(data) - len(data) % 3
            b = np.frombuffer(data[:usable], dtype=np.uint8).reshape(-1, 3)
            val = (
                b[:, 0].astype(np.int32)
                | (b[:, 1].astype(np.int32) << 8)
                | (b[:, 2].astype(np.int32) << 16)
            )
            val = np.where(val >= 1 << 23, val - (1 << 24), val)
            x = val.astype(np.float64) / float(1 << 23)
        elif bits == 32:
            x = np.frombuffer(data, dtype="<i4").astype(np.float64) / float(1 << 31)
        else:
            raise UnsupportedFormat(f"{bits}-bit integer PCM")
    elif code == WAVE_FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise UnsupportedFormat(f"{bits}-bit float PCM")
        x = np.frombuffer(data, dtype="<f4").astype(np.float64)
        x = np.clip(x, -1.0, 1.0)
    else:
        raise UnsupportedFormat(f"WAVE format code {code:#x}")

    usable = len(x) - len(x) % channels
    x = x[:usable]
    if channels == 2:
        x = x.reshape(-1, 2).mean(axis=1)
    if len(x) == 0:
        raise EmptyAudio(str(path))
    if not np.all(np.isfinite(x)):
        raise CorruptHeader("non-finite sample values")
    return AudioClip(samples=x, sample_rate=int(rate))


def wav_duration_seconds(path: str | Path) -> float:
    """Duration from the header alone (no sample decoding)."""
    raw = Path(path).read_bytes()
    chunks = _read_chunks(raw)
    if b"fmt " not in chunks or b"data" not in chunks:
        raise CorruptHeader("missing fmt or data chunk")
    code, channels, rate, bits = _parse_fmt(chunks[b"fmt "])
    if rate <= 0 or channels <= 0 or bits <= 0 or bits % 8:
        raise CorruptHeader("invalid fmt fields")
    frames = len(chunks[b"data"]) // (channels * bits // 8)
    return frames / rate


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int) -> None:
    """Write a mono float waveform as 16-bit PCM."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2")
    data = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    fmt = struct.pack("<HHIIHH", WAVE_FORMAT_PCM, 1, sample_rate, sample_rate * 2, 2, 16)
    body = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(data)) + data
    Path(path).write_bytes(header + body)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Linear-interpolation resampling to target_rate.

    Output length is round(n * target/source); positions beyond the last
    input sample hold the boundary value. Identity (same object) when the
    rates already match.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if len(clip.samples) == 0:
        raise EmptyAudio("cannot resample an empty clip")
    if target_rate == clip.sample_rate:
        return clip
    n_in = len(clip.samples)
    n_out = int(round(n_in * target_rate / clip.sample_rate))
    positions = np.arange(n_out) * (clip.sample_rate / target_rate)
    out = np.interp(positions, np.arange(n_in), clip.samples)
    return AudioClip(samples=out, sample_rate=int(target_rate))


def segment(
    clip: AudioClip,
    window_seconds: float = 10.0,
    hop_seconds: float = 5.0,
    clip_id: str = "",
) -> list[Segment]:
    """Cut a clip into fixed-length windows.

    Clips shorter than the window are tile-repeated to exactly one window.
    Longer clips yield windows at offsets 0, hop, 2*hop, ... plus a final
    right-aligned window when the last hop does not land on the clip end,
    so every sample is covered.
    """
    if len(clip.samples) == 0:
        raise EmptyAudio("cannot segment an empty clip")
    if not 0 < hop_seconds <= window_seconds:
        raise ValueError("need 0 < hop_seconds <= window_seconds")
    rate = clip.sample_rate
    win = int(round(window_seconds * rate))
    hop = int(round(hop_seconds * rate))
    x = clip.samples
    n = len(x)

    if n < win:
        reps = -(-win // n)  # ceil
        tiled = np.tile(x, reps)[:win]
        return [Segment(samples=tiled, source_clip_id=clip_id, offset_seconds=0.0)]

    offsets = list(range(0, n - win + 1, hop))
    if (n - win) % hop != 0:
        offsets.append(n - win)
    return [
        Segment(samples=x[o : o + win], source_clip_id=clip_id, offset_seconds=o / rate)
        for o in offsets
    ]
