"""File helpers: atomic writes, binary PGM (P5) images, SDF point CSVs."""

import csv
import os
import tempfile
from pathlib import Path

import numpy as np

from .wscore import ParseError


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
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


def encode_pgm(image: np.ndarray) -> bytes:
    """8-bit grayscale P5. ``image`` holds integers in [0, 255], shape (H, W)."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if img.min(initial=0) < 0 or img.max(initial=0) > 255:
        raise ValueError("pixel values must lie in [0, 255]")
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + img.astype(np.uint8).tobytes()


def write_pgm(path, image: np.ndarray) -> None:
    atomic_write_bytes(path, encode_pgm(image))


def _tokens(data: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header", pos)
        out.append((data[start:pos], start))
    return out, pos


def decode_pgm(data: bytes):
    """Decode a binary P5 image into a uint8 (or uint16 for maxval > 255) array."""
    if data[:2] != b"P5":
        raise ParseError("not a binary PGM (magic P5 expected)", 0)
    toks, pos = _tokens(data, 3, 2)
    try:
        width, height, maxval = (int(t) for t, _ in toks)
    except ValueError:
        raise ParseError("non-integer PGM header field", toks[0][1]) from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ParseError(f"invalid PGM header {width}x{height} maxval {maxval}", toks[0][1])
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    need = width * height * dtype.itemsize
    if len(data) - pos < need:
        raise ParseError(f"PGM raster truncated: need {need} bytes, have {len(data) - pos}", len(data))
    img = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    return img.reshape(height, width), maxval


def read_pgm(path) -> np.ndarray:
    """Read a P5 file and return values in [0, 1] as float64."""
    with open(path, "rb") as fh:
        img, maxval = decode_pgm(fh.read())
    return img.astype(np.float64) / maxval


def read_sdf_csv(path):
    """Read ``x,y,z,sdf`` rows; returns (points (N, 3), sdf (N,))."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"x", "y", "z", "sdf"} <= set(reader.fieldnames):
            raise ParseError("SDF CSV needs columns x,y,z,sdf", 0)
        for i, row in enumerate(reader):
            try:
                rows.append([float(row[k]) for k in ("x", "y", "z", "sdf")])
            except (TypeError, ValueError):
                raise ParseError(f"bad numeric value on data row {i + 1}") from None
    if not rows:
        raise ParseError("SDF CSV has no data rows", 0)
    arr = np.array(rows)
    return arr[:, :3], arr[:, 3]


def write_sdf_csv(path, points: np.ndarray, sdf: np.ndarray) -> None:
    lines = ["x,y,z,sdf"]
    lines += [f"{p[0]!r},{p[1]!r},{p[2]!r},{s!r}" for p, s in zip(points.tolist(), np.ravel(sdf).tolist())]
    atomic_write_text(path, "\n".join(lines) + "\n")
