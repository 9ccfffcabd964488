"""Clip file container.

Layout: 8-byte magic, uint64 little-endian header length, UTF-8 JSON header
with {N, H, W, C, dtype, fps} plus optional caption/meta, then the frame
blob row-major [N, H, W, C]. dtype is "u1" (pixels quantized to 0..255) or
"<f4". Headers serialize canonically so identical clips produce identical
bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..types import VideoClip

MAGIC = b"SEMFICLP"
_DTYPES = {"u1": np.dtype("u1"), "<f4": np.dtype("<f4")}


def write_clip(path: str | Path, clip: VideoClip, dtype: str = "u1") -> None:
    if dtype not in _DTYPES:
        raise FormatError(f"unsupported clip dtype {dtype!r}")
    n, h, w, c = clip.frames.shape
    header = {
        "N": n,
        "H": h,
        "W": w,
        "C": c,
        "dtype": dtype,
        "fps": clip.fps,
        "caption": clip.caption,
        "meta": clip.meta,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode(
        "utf-8"
    )
    if dtype == "u1":
        blob = np.round(clip.frames * 255.0).astype("u1").tobytes()
    else:
        blob = clip.frames.astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        f.write(blob)


def read_clip(path: str | Path) -> VideoClip:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise FormatError(f"bad clip magic {magic!r} in {path}")
        (hlen,) = struct.unpack("<Q", f.read(8))
        try:
            header = json.loads(f.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"unparseable clip header in {path}: {e}") from e
        for field in ("N", "H", "W", "C", "dtype", "fps"):
            if field not in header:
                raise FormatError(f"clip header missing field {field!r} in {path}")
        if header["dtype"] not in _DTYPES:
            raise FormatError(f"unsupported clip dtype {header['dtype']!r}")
        shape = (header["N"], header["H"], header["W"], header["C"])
        count = int(np.prod(shape))
        raw = np.frombuffer(
            f.read(count * _DTYPES[header["dtype"]].itemsize),
            dtype=_DTYPES[header["dtype"]],
        )
    if raw.size != count:
        raise FormatError(
            f"clip blob truncated in {path}: {raw.size} values for shape {shape}"
        )
    frames = raw.reshape(shape)
    if header["dtype"] == "u1":
        frames = frames.astype(np.float32) / 255.0
    else:
        frames = frames.astype(np.float32)
    return VideoClip(
        frames=frames,
        fps=header["fps"],
        caption=header.get("caption", ""),
        meta=header.get("meta", {}),
    )
