"""Applications that consume generated bits: one-time passwords and
AES-256-CTR file encryption with an HMAC-SHA256 authenticator.

Every consumer draws from an :class:`EntropyPool`, which hands out each bit
exactly once and in order.
"""

from __future__ import annotations

import hashlib
import hmac
import math
import struct
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .bits import BitStream

MAGIC = b"MTRNGENC"
VERSION = 1
NONCE_BYTES = 16
TAG_BYTES = 32
KEY_BITS = 256
_HEADER = struct.Struct(">8sB16sQ")
HEADER_BYTES = _HEADER.size  # 33
MIN_ENVELOPE_BYTES = HEADER_BYTES + TAG_BYTES

ALPHANUMERIC = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz"
DIGITS = "0123456789"


class PoolExhaustedError(RuntimeError):
    """The pool has fewer unread bits than an operation needs."""


class EnvelopeError(ValueError):
    pass


class EnvelopeFormatError(EnvelopeError):
    """Truncated or structurally invalid envelope."""


class AuthenticationError(EnvelopeError):
    """Authenticator mismatch: wrong key or corrupted envelope."""


class UnsupportedVersionError(EnvelopeError):
    pass


class TruncatedEnvelopeError(EnvelopeFormatError, AuthenticationError):
    """Body length disagrees with the declared length and the tag fails.

    Truncation and a flipped length bit look identical from outside, so
    this is both a format error and an authentication failure.
    """


class EntropyPool:
    """Strictly-once, in-order reader over a bit stream."""

    def __init__(self, source: BitStream):
        self._bits = source.to_bits()
        self.consumed = 0

    @property
    def size(self) -> int:
        return len(self._bits)

    @property
    def remaining(self) -> int:
        return len(self._bits) - self.consumed

    def take(self, n: int) -> np.ndarray:
        """Next ``n`` bits as a uint8 array; raises rather than reuse bits."""
        if n < 0:
            raise ValueError("cannot take a negative number of bits")
        if n > self.remaining:
            raise PoolExhaustedError(f"need {n} bits, {self.remaining} left of {self.size}")
        out = self._bits[self.consumed : self.consumed + n]
        self.consumed += n
        return out

    def take_bytes(self, n_bytes: int) -> bytes:
        return np.packbits(self.take(8 * n_bytes)).tobytes()

    def take_uint(self, n: int) -> int:
        """``n`` bits read MSB-first as an unsigned integer."""
        v = 0
        for b in self.take(n).tolist():
            v = (v << 1) | b
        return v


def otp(pool: EntropyPool, length: int, charset: str = ALPHANUMERIC) -> str:
    """Password of ``length`` symbols, uniform over ``charset``.

    Each draw reads ceil(log2 |charset|) bits; values past the end of the
    charset are discarded and redrawn, so there is no modulo bias.
    """
    size = len(charset)
    if size < 2:
        raise ValueError("charset needs at least two symbols")
    if len(set(charset)) != size:
        raise ValueError("charset symbols must be distinct")
    if length < 0:
        raise ValueError("length must be >= 0")
    width = math.ceil(math.log2(size))
    out = []
    while len(out) < length:
        v = pool.take_uint(width)
        if v < size:
            out.append(charset[v])
    return "".join(out)


def derive_key(pool: EntropyPool, key_bits: int = KEY_BITS) -> bytes:
    """The next ``key_bits`` pool bits, packed MSB-first."""
    if key_bits <= 0 or key_bits % 8:
        raise ValueError("key_bits must be a positive multiple of 8")
    return pool.take_bytes(key_bits // 8)


@dataclass(frozen=True)
class KeyMaterial:
    enc_key: bytes
    mac_key: bytes

    def __post_init__(self):
        if len(self.enc_key) != 32 or len(self.mac_key) != 32:
            raise ValueError("keys must be 32 bytes each")

    def to_bytes(self) -> bytes:
        return self.enc_key + self.mac_key

    @classmethod
    def from_bytes(cls, raw: bytes) -> "KeyMaterial":
        if len(raw) != 64:
            raise ValueError(f"key file must hold 64 bytes, got {len(raw)}")
        return cls(raw[:32], raw[32:])

    @classmethod
    def from_pool(cls, pool: EntropyPool) -> "KeyMaterial":
        return cls(derive_key(pool), derive_key(pool))


@dataclass(frozen=True)
class CipherEnvelope:
    nonce: bytes
    ciphertext: bytes
    auth_tag: bytes
    version: int = VERSION
    magic: bytes = MAGIC
    # as read from the wire; None means len(ciphertext)
    declared_length: int | None = None

    def header(self) -> bytes:
        n = len(self.ciphertext) if self.declared_length is None else self.declared_length
        return _HEADER.pack(self.magic, self.version, self.nonce, n)

    def to_bytes(self) -> bytes:
        return self.header() + self.ciphertext + self.auth_tag

    @classmethod
    def from_bytes(cls, raw: bytes) -> "CipherEnvelope":
        """Split the wire format; field values are trusted only after decrypt() authenticates them."""
        raw = bytes(raw)
        if len(raw) < MIN_ENVELOPE_BYTES:
            raise EnvelopeFormatError(f"envelope too short: {len(raw)} bytes (minimum {MIN_ENVELOPE_BYTES})")
        magic, version, nonce, length = _HEADER.unpack_from(raw)
        return cls(nonce, raw[HEADER_BYTES:-TAG_BYTES], raw[-TAG_BYTES:], version, magic, length)


def _tag(mac_key: bytes, authenticated: bytes) -> bytes:
    return hmac.new(mac_key, authenticated, hashlib.sha256).digest()


def _ctr(key: bytes, nonce: bytes, data: bytes) -> bytes:
    ctx = Cipher(algorithms.AES(key), modes.CTR(nonce)).encryptor()
    return ctx.update(data) + ctx.finalize()


def encrypt(plaintext: bytes, pool: EntropyPool, keys: KeyMaterial | None = None) -> tuple[CipherEnvelope, KeyMaterial]:
    """AES-256-CTR, then HMAC-SHA256 over header and ciphertext.

    Pool order: encryption key (256 bits), MAC key (256 bits), then the
    128-bit nonce. With ``keys`` given only the nonce is drawn.
    """
    if keys is None:
        keys = KeyMaterial.from_pool(pool)
    nonce = pool.take_bytes(NONCE_BYTES)
    ct = _ctr(keys.enc_key, nonce, bytes(plaintext))
    env = CipherEnvelope(nonce, ct, b"")
    tag = _tag(keys.mac_key, env.header() + ct)
    return CipherEnvelope(nonce, ct, tag), keys


def decrypt(envelope: CipherEnvelope | bytes, keys: KeyMaterial) -> bytes:
    """Verify the authenticator, then decrypt.

    The tag is checked before any header field is trusted, so corruption
    anywhere (magic, version, length, nonce, body, tag) surfaces as
    :class:`AuthenticationError`.
    """
    env = CipherEnvelope.from_bytes(envelope) if isinstance(envelope, (bytes, bytearray)) else envelope
    expected = _tag(keys.mac_key, env.header() + env.ciphertext)
    length_ok = env.declared_length in (None, len(env.ciphertext))
    if not hmac.compare_digest(expected, env.auth_tag):
        if not length_ok:
            raise TruncatedEnvelopeError(
                f"declared length {env.declared_length} != {len(env.ciphertext)} body bytes; authenticator mismatch"
            )
        raise AuthenticationError("authenticator mismatch (wrong key or corrupted envelope)")
    if env.magic != MAGIC:
        raise EnvelopeFormatError(f"bad magic {env.magic!r}")
    if env.version != VERSION:
        raise UnsupportedVersionError(f"envelope version {env.version} (supported: {VERSION})")
    if not length_ok:
        raise EnvelopeFormatError("declared length does not match ciphertext")
    return _ctr(keys.enc_key, env.nonce, env.ciphertext)
