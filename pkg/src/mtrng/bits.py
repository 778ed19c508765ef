"""Packed bit sequences and their on-disk formats.

Bits are packed MSB-first within each byte; trailing pad bits are zero.
A raw bit file is the packed bytes with a ``<name>.meta`` sidecar holding
``key=value`` lines (``n_bits``, ``sha256``, ``source_sha256``, ...).
The ASCII form is one ``0``/``1`` character per bit, 64 per line.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BIT_ORDER = "msb-first"
ASCII_LINE = 64


class BitFileError(ValueError):
    """Malformed bit file or sidecar."""


@dataclass(frozen=True)
class BitStream:
    data: bytes
    n_bits: int

    def __post_init__(self):
        nbytes = len(self.data)
        if self.n_bits < 0 or not (self.n_bits <= 8 * nbytes < self.n_bits + 8):
            raise ValueError(f"{self.n_bits} bits do not fit {nbytes} bytes")
        pad = 8 * nbytes - self.n_bits
        if pad and self.data[-1] & ((1 << pad) - 1):
            raise ValueError("trailing pad bits must be zero")

    @classmethod
    def from_bits(cls, bits) -> "BitStream":
        arr = np.asarray(bits, dtype=np.uint8).ravel()
        if arr.size and arr.max() > 1:
            raise ValueError("bits must be 0 or 1")
        return cls(np.packbits(arr).tobytes(), int(arr.size))

    @classmethod
    def from_string(cls, text: str) -> "BitStream":
        chars = [c for c in text if not c.isspace()]
        if any(c not in "01" for c in chars):
            raise ValueError("bit string may only contain 0 and 1")
        return cls.from_bits([c == "1" for c in chars])

    def to_bits(self) -> np.ndarray:
        """Unpacked ``uint8`` array of length ``n_bits``."""
        return np.unpackbits(np.frombuffer(self.data, dtype=np.uint8), count=self.n_bits)

    def __len__(self) -> int:
        return self.n_bits

    def __getitem__(self, item: slice) -> "BitStream":
        if not isinstance(item, slice):
            raise TypeError("BitStream supports slicing only")
        return BitStream.from_bits(self.to_bits()[item])

    def sha256(self) -> str:
        return hashlib.sha256(self.data).hexdigest()

    def to_ascii(self) -> str:
        s = "".join("1" if b else "0" for b in self.to_bits())
        lines = [s[i:i + ASCII_LINE] for i in range(0, len(s), ASCII_LINE)]
        return "\n".join(lines) + ("\n" if lines else "")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta")


def write_bits(path, bits: BitStream, *, ascii: bool = False, source_sha256: str = "", extra: dict | None = None) -> Path:
    """Write ``bits`` plus its sidecar; returns the sidecar path.

    ``extra`` adds provenance fields (single-line values) to the sidecar.
    """
    path = Path(path)
    if ascii:
        path.write_text(bits.to_ascii())
    else:
        path.write_bytes(bits.data)
    meta = {
        "format": "ascii" if ascii else "raw",
        "n_bits": str(bits.n_bits),
        "bit_order": BIT_ORDER,
        "sha256": bits.sha256(),
        "source_sha256": source_sha256,
    }
    for k, v in (extra or {}).items():
        if "=" in k or "\n" in str(v):
            raise ValueError(f"sidecar field {k!r} must be a single key=value line")
        meta[k] = str(v)
    mp = _meta_path(path)
    mp.write_text("".join(f"{k}={v}\n" for k, v in meta.items()))
    return mp


def read_meta(path) -> dict[str, str]:
    mp = _meta_path(Path(path))
    if not mp.exists():
        return {}
    meta = {}
    for lineno, line in enumerate(mp.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise BitFileError(f"{mp}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        meta[k.strip()] = v.strip()
    return meta


def read_bits(path) -> BitStream:
    """Read a raw or ASCII bit file.

    The sidecar decides the format and bit count when present; otherwise a
    ``.txt`` suffix means ASCII and anything else is raw with ``8 * size`` bits.
    """
    path = Path(path)
    meta = read_meta(path)
    fmt = meta.get("format") or ("ascii" if path.suffix == ".txt" else "raw")
    if fmt == "ascii":
        try:
            bits = BitStream.from_string(path.read_text())
        except (UnicodeDecodeError, ValueError) as exc:
            raise BitFileError(f"{path}: not an ASCII bit file ({exc})") from None
    elif fmt == "raw":
        data = path.read_bytes()
        n = int(meta.get("n_bits", 8 * len(data)))
        try:
            bits = BitStream(data, n)
        except ValueError as exc:
            raise BitFileError(f"{path}: {exc}") from None
    else:
        raise BitFileError(f"{path}: unknown format {fmt!r}")
    if "n_bits" in meta and int(meta["n_bits"]) != bits.n_bits:
        raise BitFileError(f"{path}: sidecar says {meta['n_bits']} bits, file has {bits.n_bits}")
    if meta.get("bit_order", BIT_ORDER) != BIT_ORDER:
        raise BitFileError(f"{path}: unsupported bit order {meta['bit_order']!r}")
    return bits
