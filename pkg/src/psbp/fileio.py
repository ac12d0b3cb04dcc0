"""Binary PGM / PFM image files and deterministic JSON reports.

PGM files are written as binary "P5" with either 8- or 16-bit samples;
16-bit samples are big-endian per the Netpbm convention.  PFM files are
little-endian float32 (scale header -1.0) with the customary bottom-up row
order; "Pf" carries one channel, "PF" three.  JSON output is fully
deterministic: sorted keys, two-space indent, trailing newline.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def _read_token(stream):
    # Skip whitespace and '#' comments, then read one whitespace-delimited token.
    token = b""
    while True:
        ch = stream.read(1)
        if not ch:
            raise ValueError("truncated header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = stream.read(1)
            continue
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def read_pgm(path):
    """Read a binary PGM; returns (data, maxval) with data as uint8/uint16."""
    with open(path, "rb") as fh:
        magic = _read_token(fh)
        if magic != b"P5":
            raise ValueError(f"{path}: not a binary PGM file (magic {magic!r})")
        width = int(_read_token(fh))
        height = int(_read_token(fh))
        maxval = int(_read_token(fh))
        if not 0 < maxval < 65536:
            raise ValueError(f"{path}: invalid maxval {maxval}")
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        count = width * height
        raw = fh.read(count * dtype.itemsize)
        if len(raw) != count * dtype.itemsize:
            raise ValueError(f"{path}: truncated pixel data")
        data = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    if maxval > 255:
        return data.astype(np.uint16), maxval
    return data.astype(np.uint8), maxval


def write_pgm(path, data, maxval=65535):
    """Write a 2-d integer array as binary PGM."""
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise ValueError("PGM data must be 2-d")
    if not 0 < maxval < 65536:
        raise ValueError(f"invalid maxval {maxval}")
    if arr.min() < 0 or arr.max() > maxval:
        raise ValueError("PGM samples out of range for maxval")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.astype(dtype).tobytes())


def load_image(path):
    """Read a PGM into floats scaled to [0, 1] by its maxval."""
    data, maxval = read_pgm(path)
    return data.astype(np.float64) / float(maxval)


def save_image(path, values, maxval=65535):
    """Quantize a float image (clipped to [0, 1]) into a PGM."""
    arr = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    write_pgm(path, np.rint(arr * maxval).astype(np.uint32), maxval=maxval)


def read_pfm(path):
    """Read a PFM; returns (H, W) or (H, W, 3) float32 in top-down row order."""
    with open(path, "rb") as fh:
        magic = _read_token(fh)
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise ValueError(f"{path}: not a PFM file (magic {magic!r})")
        width = int(_read_token(fh))
        height = int(_read_token(fh))
        scale = float(_read_token(fh))
        dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
        count = width * height * channels
        raw = fh.read(count * 4)
        if len(raw) != count * 4:
            raise ValueError(f"{path}: truncated pixel data")
        data = np.frombuffer(raw, dtype=dtype)
        shape = (height, width, channels) if channels == 3 else (height, width)
        data = data.reshape(shape)
    return np.ascontiguousarray(data[::-1]).astype(np.float32)


def write_pfm(path, values):
    """Write a float array ((H, W) or (H, W, 3)) as a little-endian PFM."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim == 2:
        magic = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValueError("PFM data must be (H, W) or (H, W, 3)")
    if not np.isfinite(arr).all():
        raise ValueError("PFM data must be finite")
    header = magic + f"\n{arr.shape[1]} {arr.shape[0]}\n-1.0\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr[::-1]).astype("<f4").tobytes())


def save_mask(path, mask):
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0), maxval=255)


def load_mask(path):
    data, _ = read_pgm(path)
    return data > 0


def write_json(path, payload):
    """Write JSON deterministically: sorted keys, indent 2, trailing newline."""
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="ascii")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
