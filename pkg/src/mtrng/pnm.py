"""Portable anymap (PBM/PGM/PPM) reading and writing.

Plain bitmaps (P1) are what the bitmap export emits. The gray and color
variants let the privacy-perturbation command load and save ordinary images.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class PnmError(ValueError):
    pass


@dataclass(frozen=True)
class Image:
    pixels: np.ndarray  # (h, w) or (h, w, 3); 1 = black for bitmaps
    maxval: int  # 1 for bitmaps
    kind: str  # "P1" .. "P6"


def pbm_text(image: np.ndarray, comment: str = "") -> str:
    """Plain P1 text: header, optional comment, one row per line."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise PnmError("bitmap must be two-dimensional")
    if not np.isin(img, (0, 1)).all():
        raise PnmError("bitmap pixels must be 0 or 1")
    h, w = img.shape
    lines = ["P1"]
    for c in comment.splitlines():
        lines.append("# " + c)
    lines.append(f"{w} {h}")
    lines.extend(" ".join("1" if v else "0" for v in row) for row in img)
    return "\n".join(lines) + "\n"


def write_pbm(path, image: np.ndarray, comment: str = "") -> None:
    Path(path).write_text(pbm_text(image, comment), encoding="ascii")


def _tokens(data: bytes):
    """Yield (token, end offset) pairs, skipping comments."""
    i, n = 0, len(data)
    while i < n:
        c = data[i : i + 1]
        if c == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < n and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
                j += 1
            yield data[i:j], j
            i = j


def read_pnm(path) -> Image:
    data = Path(path).read_bytes()
    toks = _tokens(data)
    try:
        magic = next(toks)[0].decode("ascii")
        if magic not in ("P1", "P2", "P3", "P4", "P5", "P6"):
            raise PnmError(f"unknown magic {magic!r}")
        if magic == "P4":
            raise PnmError("packed P4 bitmaps are not supported")
        w = int(next(toks)[0])
        h = int(next(toks)[0])
        if magic == "P1":
            maxval, end = 1, None
        else:
            tok, end = next(toks)
            maxval = int(tok)
    except StopIteration:
        raise PnmError("truncated header") from None
    except ValueError as e:
        if isinstance(e, PnmError):
            raise
        raise PnmError(f"bad header: {e}") from None
    if w < 1 or h < 1 or not 1 <= maxval <= 255:
        raise PnmError("unsupported dimensions or maxval (8-bit only)")
    channels = 3 if magic in ("P3", "P6") else 1
    count = w * h * channels
    if magic in ("P5", "P6"):
        raw = data[end + 1 : end + 1 + count]
        if len(raw) < count:
            raise PnmError("truncated raster")
        flat = np.frombuffer(raw, dtype=np.uint8).copy()
    elif magic == "P1":
        # P1 digits need not be separated by whitespace
        digits = bytearray()
        body = _after_header(data, 3)
        for tok, _ in _tokens(body):
            digits.extend(tok)
        if len(digits) < count or not set(digits[:count]) <= {ord("0"), ord("1")}:
            raise PnmError("bad or truncated P1 raster")
        flat = np.frombuffer(bytes(digits[:count]), dtype=np.uint8) - ord("0")
    else:
        try:
            vals = [int(t) for t, _ in _tokens(_after_header(data, 4))]
        except ValueError:
            raise PnmError("non-numeric raster value") from None
        if len(vals) < count:
            raise PnmError("truncated raster")
        if min(vals[:count]) < 0 or max(vals[:count]) > maxval:
            raise PnmError(f"raster value outside [0, {maxval}]")
        flat = np.asarray(vals[:count], dtype=np.uint8)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return Image(flat.reshape(shape).astype(np.uint8), maxval, magic)


def _after_header(data: bytes, n_tokens: int) -> bytes:
    end = 0
    for k, (_, end) in enumerate(_tokens(data), 1):
        if k == n_tokens:
            break
    return data[end:]


def write_pnm(path, image: Image) -> None:
    px = np.asarray(image.pixels)
    kind = image.kind
    if kind == "P1":
        write_pbm(path, px)
        return
    want = 3 if kind in ("P3", "P6") else 2
    if px.ndim != want or (want == 3 and px.shape[2] != 3):
        raise PnmError(f"{kind} needs a {'(h, w, 3)' if want == 3 else '(h, w)'} array, got {px.shape}")
    h, w = px.shape[:2]
    header = f"{kind}\n{w} {h}\n{image.maxval}\n".encode("ascii")
    if kind in ("P5", "P6"):
        Path(path).write_bytes(header + px.astype(np.uint8).tobytes())
    elif kind in ("P2", "P3"):
        rows = [" ".join(map(str, r.ravel().tolist())) for r in px.reshape(h, -1)]
        Path(path).write_bytes(header + ("\n".join(rows) + "\n").encode("ascii"))
    else:
        raise PnmError(f"cannot write {kind}")
