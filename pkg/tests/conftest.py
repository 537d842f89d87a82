import struct
import sys
from pathlib import Path

import numpy as np
import pytest

# allow running the suite from a fresh checkout without installing
_SRC = Path(__file__).resolve().parent.parent / "src"
if str(_SRC) not in sys.path:
    sys.path.insert(0, str(_SRC))


def wav_bytes(
    payload: bytes,
    fmt_code: int = 1,
    channels: int = 1,
    rate: int = 32000,
    bits: int = 16,
    magic: bytes = b"RIFF",
    wave: bytes = b"WAVE",
) -> bytes:
    """Hand-assembled RIFF/WAVE container for decoder tests."""
    fmt = struct.pack(
        "<HHIIHH", fmt_code, channels, rate, rate * channels * bits // 8,
        channels * bits // 8, bits,
    )
    body = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    return magic + struct.pack("<I", 4 + len(body)) + wave + body


def int16_wav(samples, rate: int = 32000, channels: int = 1) -> bytes:
    pcm = np.asarray(samples, dtype="<i2").tobytes()
    return wav_bytes(pcm, fmt_code=1, channels=channels, rate=rate, bits=16)


def float32_wav(samples, rate: int = 32000, channels: int = 1) -> bytes:
    pcm = np.asarray(samples, dtype="<f4").tobytes()
    return wav_bytes(pcm, fmt_code=3, channels=channels, rate=rate, bits=32)


@pytest.fixture
def wav_dir(tmp_path):
    """Writes crafted wav bytes to files and returns their paths."""

    def write(name: str, blob: bytes):
        p = tmp_path / name
        p.write_bytes(blob)
        return p

    return write
