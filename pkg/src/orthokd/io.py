"""Feature dumps, config files and metrics CSVs.

Feature dump layout (all little-endian)::

    offset  size  field
    0       4     magic b"VKDF"
    4       4     version, uint32 = 1
    8       4     rows b, uint32
    12      4     cols d, uint32
    16      4*b*d payload, float32, row-major
    [16+4bd 1     label marker 0x4C ("L")
     ...    4*b   labels, uint32]

Files are written to a temporary sibling and renamed into place.
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .config import DEFAULTS, TrainConfig, make_config, parse_value
from .errors import ConfigError, DataError, FormatError, UnknownKeyError

MAGIC = b"VKDF"
VERSION = 1
LABEL_MARKER = 0x4C
_HEADER = struct.Struct("<4sIII")


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def encode_features(z, labels=None) -> bytes:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise DataError(f"features must be 2-D, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise DataError("features contain non-finite values")
    with np.errstate(over="ignore"):
        payload = z.astype("<f4")  # round to nearest even
    if not np.all(np.isfinite(payload)):
        raise DataError("features overflow float32")
    b, d = z.shape
    parts = [_HEADER.pack(MAGIC, VERSION, b, d), payload.tobytes(order="C")]
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (b,):
            raise DataError(f"expected {b} labels, got shape {labels.shape}")
        if b and (labels.min() < 0 or labels.max() > 0xFFFFFFFF):
            raise DataError("labels must fit in uint32")
        parts.append(bytes([LABEL_MARKER]))
        parts.append(labels.astype("<u4").tobytes())
    return b"".join(parts)


def write_features(path, z, labels=None) -> None:
    atomic_write_bytes(path, encode_features(z, labels))


def decode_features(data: bytes):
    if len(data) < _HEADER.size:
        raise FormatError(f"truncated header: expected {_HEADER.size} bytes, got {len(data)}")
    magic, version, b, d = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    plain = _HEADER.size + 4 * b * d
    labelled = plain + 1 + 4 * b
    if len(data) == plain:
        has_labels = False
    elif len(data) == labelled:
        has_labels = True
        if data[plain] != LABEL_MARKER:
            raise FormatError(f"bad label marker 0x{data[plain]:02X} at offset {plain}")
    else:
        raise FormatError(
            f"file length {len(data)} does not match {b}x{d} dump: "
            f"expected {plain} (no labels) or {labelled} (with labels)"
        )
    z = np.frombuffer(data, dtype="<f4", count=b * d, offset=_HEADER.size).reshape(b, d)
    if not np.all(np.isfinite(z)):
        raise DataError("payload contains non-finite values")
    z = np.ascontiguousarray(z, dtype=np.float64)
    labels = None
    if has_labels:
        labels = np.frombuffer(data, dtype="<u4", count=b, offset=plain + 1).astype(np.int64)
    return z, labels


def read_features(path):
    """Return ``(features, labels)``; ``labels`` is ``None`` when absent."""
    return decode_features(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# config files


def parse_config_text(text: str, overrides=()) -> TrainConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    Unknown keys are errors.  Duplicate keys: the last one wins.
    ``overrides`` are ``"key=value"`` strings applied after the file.
    """
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise UnknownKeyError(f"unknown key {key!r}", lineno)
        values[key] = parse_value(key, value, lineno)
        lines[key] = lineno
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in DEFAULTS:
            raise UnknownKeyError(f"unknown key {key!r} in override")
        values[key] = parse_value(key, value)
        lines.pop(key, None)
    return make_config(values, lines)


def parse_config(path=None, overrides=()) -> TrainConfig:
    text = Path(path).read_text() if path is not None else ""
    return parse_config_text(text, overrides)


# ---------------------------------------------------------------------------
# CSV


def format_float(x) -> str:
    """Shortest repr that round-trips, so equal runs give equal bytes."""
    return repr(float(x))


def write_csv(path, header: str, rows) -> None:
    """``rows`` is an iterable of already-formatted lines (no newline)."""
    atomic_write_text(path, header + "\n" + "".join(r + "\n" for r in rows))
