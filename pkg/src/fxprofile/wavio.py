"""Minimal mono RIFF/WAVE reader and writer (PCM16 and IEEE float32)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import WavFormatError

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

FORMATS = ("float32", "pcm16")


def write_wav(path, samples, fs, format: str = "float32") -> Path:
    path = Path(path)
    x = np.asarray(samples)
    if x.ndim != 1:
        raise WavFormatError(f"only mono is supported, got shape {x.shape}")
    fs = int(round(fs))
    if fs <= 0:
        raise WavFormatError(f"invalid sample rate {fs}")
    if format == "float32":
        data = x.astype("<f4").tobytes()
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    elif format == "pcm16":
        q = np.clip(np.round(np.asarray(x, dtype=np.float64) * 32768.0), -32768, 32767)
        data = q.astype("<i2").tobytes()
        tag, bits = WAVE_FORMAT_PCM, 16
    else:
        raise WavFormatError(f"unsupported format {format!r}; use one of {FORMATS}")

    block = bits // 8
    if tag == WAVE_FORMAT_PCM:
        fmt = struct.pack("<HHIIHH", tag, 1, fs, fs * block, block, bits)
        extra = b""
    else:
        # non-PCM formats carry cbSize and a fact chunk
        fmt = struct.pack("<HHIIHHH", tag, 1, fs, fs * block, block, bits, 0)
        extra = b"fact" + struct.pack("<II", 4, x.size)
    body = (b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + extra
            + b"data" + struct.pack("<I", len(data)) + data)
    if len(data) % 2:
        body += b"\x00"
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    return path


def _chunks(buf: bytes):
    pos = 12
    while pos + 8 <= len(buf):
        cid = buf[pos:pos + 4]
        (size,) = struct.unpack_from("<I", buf, pos + 4)
        start = pos + 8
        if start + size > len(buf):
            raise WavFormatError(
                f"chunk {cid!r} declares {size} bytes but only {len(buf) - start} remain")
        yield cid, buf[start:start + size]
        pos = start + size + (size & 1)


def read_wav(path):
    """Return ``(samples, fs)`` with samples as float64 in [-1, 1]."""
    buf = Path(path).read_bytes()
    if len(buf) < 12 or buf[:4] != b"RIFF" or buf[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    fmt = data = None
    for cid, payload in _chunks(buf):
        if cid == b"fmt ":
            fmt = payload
        elif cid == b"data":
            data = payload
    if fmt is None or len(fmt) < 16:
        raise WavFormatError(f"{path}: missing or short fmt chunk")
    if data is None:
        raise WavFormatError(f"{path}: missing data chunk")
    tag, channels, fs, _, block, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 40:
            raise WavFormatError(f"{path}: short extensible fmt chunk")
        (tag,) = struct.unpack_from("<H", fmt, 24)
    if channels != 1:
        raise WavFormatError(f"{path}: {channels} channels; only mono is supported")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = "<i2", 1.0 / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = "<f4", 1.0
    else:
        raise WavFormatError(f"{path}: unsupported codec (format tag {tag}, {bits} bits)")
    if block != bits // 8:
        raise WavFormatError(f"{path}: block align {block} inconsistent with {bits}-bit mono")
    if len(data) % block:
        raise WavFormatError(f"{path}: data chunk is not a whole number of samples")
    x = np.frombuffer(data, dtype=dtype).astype(np.float64) * scale
    return x, float(fs)
