"""Statistical toolkit for noise traces: slopes, histograms, Gaussian fits,
weighted time-lag maps and bit balance."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .bits import BitStream

TL_DENSITY_FLOOR = 1e-300
TL_DISPLAY_FLOOR = -12.0
MAX_BINS = 10_000


@dataclass(frozen=True)
class SlopeSeries:
    values: np.ndarray
    dt: float


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)


@dataclass(frozen=True)
class GaussianFit:
    mu: float
    sigma: float
    amplitude: float
    r_squared: float


@dataclass(frozen=True)
class TLGrid:
    grid_size: int
    x_edges: np.ndarray
    y_edges: np.ndarray
    values: np.ndarray  # values[i, j] at (x_centers[i], y_centers[j])
    alpha: float
    k_norm: float

    @property
    def x_centers(self) -> np.ndarray:
        return 0.5 * (self.x_edges[1:] + self.x_edges[:-1])

    @property
    def y_centers(self) -> np.ndarray:
        return 0.5 * (self.y_edges[1:] + self.y_edges[:-1])


@dataclass(frozen=True)
class Balance:
    ones_fraction: float
    zeros_fraction: float
    n_bits: int


def slope_series(samples, dt: float) -> SlopeSeries:
    x = np.asarray(samples, dtype=float)
    if len(x) < 2:
        raise ValueError("slope series needs at least two samples")
    return SlopeSeries(np.diff(x) / dt, dt)


def _quantum(values: np.ndarray) -> float | None:
    """Common spacing of the values if they sit on a uniform lattice."""
    u = np.unique(values)
    if len(u) < 3:
        return None
    span = u[-1] - u[0]
    gaps = np.diff(u)
    gaps = gaps[gaps > 1e-9 * span]
    if len(gaps) == 0:
        return None
    q = gaps.min()
    steps = (u - u[0]) / q
    if np.max(np.abs(steps - np.round(steps))) > 1e-3:
        return None
    return float(q)


def histogram(values, bins=None) -> Histogram:
    """Histogram with Freedman-Diaconis bins unless ``bins`` is given.

    For quantized data (values on a uniform lattice) the width is rounded
    to a whole number of lattice steps and the edges sit halfway between
    lattice points, so no bin straddles an empty gap.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("cannot histogram an empty series")
    if bins is not None:
        counts, edges = np.histogram(x, bins=bins)
        return Histogram(edges, counts)
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        counts, edges = np.histogram(x, bins=1)
        return Histogram(edges, counts)
    q75, q25 = np.percentile(x, [75, 25])
    width = 2.0 * (q75 - q25) / len(x) ** (1 / 3)
    if width <= 0:
        width = (hi - lo) / max(1.0, math.sqrt(len(x)))
    q = _quantum(x)
    if q is not None:
        width = q * max(1, round(width / q))
        start = lo - q / 2
    else:
        start = lo
    if (hi - start) / width > MAX_BINS:
        # heavy outliers shrink the IQR-based width; keep the bin count bounded
        width = (hi - start) / MAX_BINS
        if q is not None:
            width = q * math.ceil(width / q)
    nbins = max(1, int(math.ceil((hi - start) / width + 1e-9)))
    if q is not None and start + nbins * width <= hi:
        nbins += 1
    edges = start + width * np.arange(nbins + 1)
    edges[-1] = max(edges[-1], hi)
    counts, edges = np.histogram(x, bins=edges)
    return Histogram(edges, counts)


def _gauss(x, amplitude, mu, sigma):
    return amplitude * np.exp(-((x - mu) ** 2) / (2.0 * sigma**2))


def gaussian_fit(hist: Histogram) -> GaussianFit:
    """Least-squares fit of ``A exp(-(x-mu)^2 / (2 sigma^2))`` to the counts.

    Starts from the histogram's moments; ``r_squared`` is computed on counts.
    """
    counts = np.asarray(hist.counts, dtype=float)
    x = hist.centers
    if np.count_nonzero(counts) < 5:
        raise ValueError("degenerate histogram: need at least 5 non-empty bins")
    total = counts.sum()
    mu0 = float(np.sum(x * counts) / total)
    sd0 = float(np.sqrt(np.sum(counts * (x - mu0) ** 2) / total))
    sd0 = max(sd0, float(np.min(hist.widths)))
    p0 = (float(counts.max()), mu0, sd0)
    with warnings.catch_warnings():
        # an exact fit leaves the covariance undefined; only the estimates are used
        warnings.simplefilter("ignore", OptimizeWarning)
        (amp, mu, sigma), _ = curve_fit(_gauss, x, counts, p0=p0, maxfev=10000)
    sigma = abs(float(sigma))
    resid = counts - _gauss(x, amp, mu, sigma)
    ss_tot = float(np.sum((counts - counts.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return GaussianFit(float(mu), sigma, float(amp), min(1.0, max(0.0, r2)))


def default_alpha(q: np.ndarray) -> float:
    span = float(np.max(q) - np.min(q))
    if span > 0:
        return 0.02 * span
    scale = abs(float(np.mean(q)))
    return 0.02 * scale if scale > 0 else 1.0


def time_lag(charge, grid_size: int = 256, alpha: float | None = None) -> TLGrid:
    """Weighted time-lag map of consecutive charge pairs ``(Q_n, Q_n+1)``.

    Each pair contributes a normalized 2-D Gaussian of width ``alpha``; the
    density is scaled so its grid maximum is 1 and stored as ``log10``.
    Zero-density cells are floored at 1e-300 before the log.
    """
    q = np.asarray(getattr(charge, "values", charge), dtype=float)
    if len(q) < 2:
        raise ValueError("time-lag map needs at least two charge values")
    if alpha is None:
        alpha = default_alpha(q)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    lo, hi = float(q.min()) - 3 * alpha, float(q.max()) + 3 * alpha
    edges = np.linspace(lo, hi, grid_size + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    # work in units of alpha so tiny or huge charge scales cannot under/overflow
    qn, qn1, c = q[:-1] / alpha, q[1:] / alpha, centers / alpha
    raw = np.zeros((grid_size, grid_size))
    # separable kernel: D = Gx^T Gy, accumulated in fixed-size blocks
    block = 4096
    for s in range(0, len(qn), block):
        gx = np.exp(-0.5 * (qn[s : s + block, None] - c[None, :]) ** 2)
        gy = np.exp(-0.5 * (qn1[s : s + block, None] - c[None, :]) ** 2)
        raw += gx.T @ gy
    peak = float(raw.max())
    if peak <= 0:
        raise ValueError("alpha too small for the grid: density underflows everywhere")
    # D = raw / (2 pi alpha^2) and K = 1 / max D
    k_norm = 2.0 * math.pi * alpha * alpha / peak
    values = np.log10(np.maximum(raw / peak, TL_DENSITY_FLOOR))
    return TLGrid(grid_size, edges, edges.copy(), values, float(alpha), k_norm)


def diagonal_fraction(grid: TLGrid, band: float, level: float = -1.0) -> float:
    """Fraction of cells with TL above ``level`` lying within ``|x - y| < band``."""
    x = grid.x_centers[:, None]
    y = grid.y_centers[None, :]
    hot = grid.values > level
    n_hot = int(np.count_nonzero(hot))
    if n_hot == 0:
        return 0.0
    return float(np.count_nonzero(hot & (np.abs(x - y) < band))) / n_hot


def bit_balance(bits: BitStream) -> Balance:
    if bits.n_bits < 1:
        raise ValueError("bit balance of an empty stream")
    ones = int(np.count_nonzero(bits.to_bits()))
    return Balance(ones / bits.n_bits, (bits.n_bits - ones) / bits.n_bits, bits.n_bits)


# --- exports -------------------------------------------------------------

def histogram_document(hist: Histogram, fit: GaussianFit | None) -> dict:
    doc = {"bin_edges": hist.bin_edges.tolist(), "counts": [int(c) for c in hist.counts]}
    if fit is not None:
        doc.update(mu=fit.mu, sigma=fit.sigma, amplitude=fit.amplitude, r_squared=fit.r_squared)
    return doc


def write_histogram_json(path, hist: Histogram, fit: GaussianFit | None) -> None:
    Path(path).write_text(json.dumps(histogram_document(hist, fit), indent=2, sort_keys=True) + "\n")


def write_tl_grid(path, grid: TLGrid) -> Path:
    """CSV matrix (row i = x center i, column j = y center j) plus a JSON sidecar."""
    path = Path(path)
    np.savetxt(path, grid.values, fmt="%.17g", delimiter=",")
    meta = {
        "grid_size": grid.grid_size,
        "x_edges": grid.x_edges.tolist(),
        "y_edges": grid.y_edges.tolist(),
        "alpha": grid.alpha,
        "k_norm": grid.k_norm,
        "layout": "rows=x, columns=y, values=log10(K*D)",
        "display_floor": TL_DISPLAY_FLOOR,
    }
    mp = path.with_name(path.name + ".meta.json")
    mp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return mp


def read_tl_grid(path) -> TLGrid:
    path = Path(path)
    values = np.loadtxt(path, delimiter=",", ndmin=2)
    meta = json.loads(path.with_name(path.name + ".meta.json").read_text())
    return TLGrid(
        int(meta["grid_size"]),
        np.asarray(meta["x_edges"]),
        np.asarray(meta["y_edges"]),
        values,
        float(meta["alpha"]),
        float(meta["k_norm"]),
    )
