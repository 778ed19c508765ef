"""Laplace-mechanism image perturbation driven by pool bits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .crypto import EntropyPool

BITS_PER_DEVIATE = 53
_MAG_BITS = BITS_PER_DEVIATE - 1
_CHUNK = 1 << 16


@dataclass(frozen=True)
class PerturbConfig:
    epsilon: float
    sensitivity_delta: float = 1.0
    clip: bool = True

    def __post_init__(self):
        if not self.epsilon > 0 or not math.isfinite(self.epsilon):
            raise ValueError("epsilon must be a positive finite number")
        if not self.sensitivity_delta > 0:
            raise ValueError("sensitivity_delta must be positive")

    @property
    def scale(self) -> float:
        return self.sensitivity_delta / self.epsilon


@dataclass(frozen=True)
class PerturbReport:
    mae: float
    psnr: float  # +inf for identical images


def uniform_deviates(pool: EntropyPool, n: int) -> np.ndarray:
    """``n`` deviates in (-1/2, 1/2) from 53 pool bits each.

    Bit layout per deviate, MSB first: one sign bit (1 = negative), then a
    52-bit magnitude ``m``; ``|u| = (m + 1/2) / 2^53``, which never reaches
    0 or 1/2.
    """
    bits = pool.take(n * BITS_PER_DEVIATE).reshape(n, BITS_PER_DEVIATE)
    weights = np.left_shift(np.uint64(1), np.arange(_MAG_BITS - 1, -1, -1, dtype=np.uint64))
    out = np.empty(n, dtype=np.float64)
    for s in range(0, n, _CHUNK):
        blk = bits[s : s + _CHUNK]
        mag = blk[:, 1:].astype(np.uint64) @ weights
        absu = (mag.astype(np.float64) + 0.5) / 2.0**53
        out[s : s + _CHUNK] = np.where(blk[:, 0] == 1, -absu, absu)
    return out


def laplace_noise(pool: EntropyPool, n: int, scale: float) -> np.ndarray:
    """Inverse-CDF Laplace(0, scale) samples."""
    u = uniform_deviates(pool, n)
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def dp_perturb(image, cfg: PerturbConfig, pool: EntropyPool) -> np.ndarray:
    """Add independent Laplace(0, delta/epsilon) noise to every pixel."""
    img = np.asarray(image, dtype=np.float64)
    noise = laplace_noise(pool, img.size, cfg.scale).reshape(img.shape)
    out = img + noise
    if cfg.clip:
        np.clip(out, 0.0, 1.0, out=out)
    return out


def perturbation_report(original, perturbed) -> PerturbReport:
    """MAE and PSNR with peak 1.0."""
    a = np.asarray(original, dtype=np.float64)
    b = np.asarray(perturbed, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty images")
    diff = a - b
    mae = float(np.mean(np.abs(diff)))
    mse = float(np.mean(diff * diff))
    psnr = math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)
    return PerturbReport(mae, psnr)


def to_unit(pixels: np.ndarray, maxval: int) -> np.ndarray:
    return np.asarray(pixels, dtype=np.float64) / maxval


def from_unit(image: np.ndarray, maxval: int) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image) * maxval), 0, maxval).astype(np.uint8)
