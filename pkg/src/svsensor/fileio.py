"""File formats: PFM radiance maps, 16-bit PGM raw captures with JSON
sidecars, gain-stack directories, and the JSON documents for plans and
profiles.

PFM here is the single-channel 'Pf' variant: text header (type, dimensions,
scale), then rows of little-endian float32 stored bottom-up; a negative
scale marks little endianness.  PGM is the binary 'P5' variant with 16-bit
big-endian samples, per the netpbm convention.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import DataError


# ------------------------------------------------------------------- PFM

def read_pfm(path) -> np.ndarray:
    """Read a single-channel PFM into a float array (top-down row order)."""
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header == b"PF":
            raise DataError(f"{path}: color PFM not supported, expected 'Pf'")
        if header != b"Pf":
            raise DataError(f"{path}: not a PFM file")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise DataError(f"{path}: malformed PFM dimensions")
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        count = width * height
        dtype = "<f4" if scale < 0 else ">f4"
        buf = fh.read(count * 4)
        if len(buf) != count * 4:
            raise DataError(f"{path}: truncated PFM payload")
        data = np.frombuffer(buf, dtype=dtype).reshape(height, width)
    # PFM stores rows bottom-up
    data = np.flipud(data).astype(np.float64)
    if abs(scale) not in (0.0, 1.0):
        data = data * abs(scale)
    return data


def write_pfm(path, data: np.ndarray) -> None:
    """Write a 2-D array as little-endian single-channel PFM."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 2:
        raise DataError("PFM writer takes a 2-D array")
    height, width = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{width} {height}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.flipud(arr).astype("<f4").tobytes())


# ------------------------------------------------------------------- PGM

def write_pgm16(path, digits: np.ndarray) -> None:
    arr = np.asarray(digits)
    if arr.ndim != 2:
        raise DataError("PGM writer takes a 2-D array")
    height, width = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n65535\n".encode())
        fh.write(arr.astype(">u2").tobytes())


def read_pgm16(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise DataError(f"{path}: not a binary PGM")
        line = fh.readline().split()
        width, height = int(line[0]), int(line[1])
        maxval = int(fh.readline().strip())
        if maxval != 65535:
            raise DataError(f"{path}: expected 16-bit PGM, maxval={maxval}")
        buf = fh.read(width * height * 2)
        if len(buf) != width * height * 2:
            raise DataError(f"{path}: truncated PGM payload")
        return np.frombuffer(buf, dtype=">u2").reshape(height, width).astype(np.uint16)


# ------------------------------------------------------- captures + sidecar

def save_capture(path_base, raw) -> None:
    """Write digits to <base>.pgm and readout metadata to <base>.json."""
    base = Path(path_base)
    write_pgm16(base.with_suffix(".pgm"), raw.digits)
    doc = {
        "seed": raw.seed,
        "gain": raw.gain.tolist(),
        "bin_factor": raw.bin_factor.tolist(),
        "meta": _plain(raw.meta),
    }
    base.with_suffix(".json").write_text(json.dumps(doc, sort_keys=True))


def load_capture(path_base, config):
    """Read a capture back from its PGM + sidecar pair."""
    from .sensor import RawCapture
    base = Path(path_base)
    digits = read_pgm16(base.with_suffix(".pgm"))
    doc = json.loads(base.with_suffix(".json").read_text())
    gain = np.asarray(doc["gain"], dtype=np.float64)
    bins = np.asarray(doc["bin_factor"], dtype=np.int64)
    sat = digits == config.digital_max
    return RawCapture(digits=digits, gain=gain, bin_factor=bins,
                      saturation_mask=sat, seed=doc.get("seed"),
                      meta=doc.get("meta", {}))


def save_gain_stack(directory, stack) -> None:
    """Write a stack as frame PGM/JSON pairs plus a manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (g, frame) in enumerate(zip(stack.gains, stack.frames)):
        name = f"frame_{i:03d}"
        save_capture(d / name, frame)
        entries.append({"gain": float(g), "base": name})
    (d / "manifest.json").write_text(
        json.dumps({"frames": entries}, sort_keys=True, indent=2))


def load_gain_stack(directory, config):
    from .readout import GainStack
    d = Path(directory)
    doc = json.loads((d / "manifest.json").read_text())
    gains, frames = [], []
    for entry in doc["frames"]:
        gains.append(float(entry["gain"]))
        frames.append(load_capture(d / entry["base"], config))
    return GainStack(gains=tuple(gains), frames=tuple(frames))


# ----------------------------------------------------------- JSON documents

def _plain(obj):
    """Recursively coerce numpy scalars/arrays for JSON."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def save_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(_plain(doc), sort_keys=True, indent=2))


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read JSON document {path}: {exc}") from exc
