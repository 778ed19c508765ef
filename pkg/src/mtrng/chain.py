"""Digital model of the analog front end: I/V conversion, high-pass, comparator."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .bits import BitStream
from .sim import CurrentTrace


class Stage(str, enum.Enum):
    CONVERTED = "CONVERTED"
    FILTERED = "FILTERED"


@dataclass(frozen=True)
class ChainConfig:
    """Front-end settings.

    ``cutoff_fc=None`` resolves to ``1 / (20 dt)`` of the trace being
    filtered; ``threshold_theta=None`` resolves to the median of the first
    ``calibration_fraction`` of the filtered samples.
    """

    gain_g: float = 1.0e6
    cutoff_fc: float | None = None
    threshold_theta: float | None = None
    hysteresis_h: float = 0.0
    sample_decimation: int = 1
    initial_state: int = 0
    calibration_fraction: float = 0.1

    def __post_init__(self):
        if not self.gain_g > 0:
            raise ValueError("gain_g must be positive")
        if self.cutoff_fc is not None and not self.cutoff_fc > 0:
            raise ValueError("cutoff_fc must be positive")
        if self.hysteresis_h < 0:
            raise ValueError("hysteresis_h must be non-negative")
        if self.sample_decimation < 1:
            raise ValueError("sample_decimation must be >= 1")
        if self.initial_state not in (0, 1):
            raise ValueError("initial_state must be 0 or 1")
        if not 0 < self.calibration_fraction <= 1:
            raise ValueError("calibration_fraction must lie in (0, 1]")

    def replace(self, **changes) -> "ChainConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def cutoff_for(self, dt: float) -> float:
        fc = self.cutoff_fc if self.cutoff_fc is not None else 1.0 / (20.0 * dt)
        if not 0 < fc < 1.0 / (2.0 * dt):
            raise ValueError(f"cutoff {fc} Hz must lie below Nyquist {1 / (2 * dt)} Hz")
        return fc


@dataclass(frozen=True)
class VoltageTrace:
    dt: float
    samples: np.ndarray
    stage_tag: Stage

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, len(self.samples) + 1)


def iv_convert(trace: CurrentTrace, cfg: ChainConfig) -> VoltageTrace:
    """Transimpedance stage: ``v = gain * i``."""
    return VoltageTrace(trace.dt, cfg.gain_g * np.asarray(trace.samples, dtype=float), Stage.CONVERTED)


def hp_coefficient(fc: float, dt: float) -> float:
    return 1.0 / (1.0 + 2.0 * math.pi * fc * dt)


def high_pass(trace: VoltageTrace, cfg: ChainConfig) -> VoltageTrace:
    """First-order recursive high-pass, ``y[n] = a (y[n-1] + x[n] - x[n-1])``, ``y[0] = 0``."""
    if trace.stage_tag is not Stage.CONVERTED:
        raise ValueError("high_pass expects a CONVERTED trace")
    a = hp_coefficient(cfg.cutoff_for(trace.dt), trace.dt)
    x = trace.samples
    y = np.zeros(len(x))
    if len(x) > 1:
        y[1:] = lfilter([a], [1.0, -a], np.diff(x))
    return VoltageTrace(trace.dt, y, Stage.FILTERED)


def calibrate_threshold(trace: VoltageTrace, cfg: ChainConfig) -> float:
    if cfg.threshold_theta is not None:
        return float(cfg.threshold_theta)
    n = max(1, int(len(trace.samples) * cfg.calibration_fraction))
    return float(np.median(trace.samples[:n]))


def schmitt(samples: np.ndarray, theta: float, h: float, initial: int = 0) -> np.ndarray:
    """Comparator state after each sample; unchanged inside ``[theta-h, theta+h]``."""
    v = np.asarray(samples, dtype=float)
    high = v > theta + h
    low = v < theta - h
    idx = np.where(high | low, np.arange(len(v)), -1)
    last = np.maximum.accumulate(idx) if len(v) else idx
    return np.where(last >= 0, high[np.maximum(last, 0)], bool(initial)).astype(np.uint8)


def comparator(trace: VoltageTrace, cfg: ChainConfig, theta: float | None = None) -> BitStream:
    """One bit per ``sample_decimation`` samples: the comparator state at each emission instant."""
    if trace.stage_tag is not Stage.FILTERED:
        raise ValueError("comparator expects a FILTERED trace")
    if theta is None:
        theta = calibrate_threshold(trace, cfg)
    state = schmitt(trace.samples, theta, cfg.hysteresis_h, cfg.initial_state)
    k = cfg.sample_decimation
    return BitStream.from_bits(state[k - 1 :: k][: len(state) // k])


def run_chain(trace: CurrentTrace, cfg: ChainConfig) -> tuple[VoltageTrace, VoltageTrace, BitStream]:
    """Ports 1, 2 and 3: converted voltage, filtered voltage, raw bits."""
    port1 = iv_convert(trace, cfg)
    port2 = high_pass(port1, cfg)
    return port1, port2, comparator(port2, cfg)


def write_voltage_csv(path, trace: VoltageTrace) -> None:
    with open(path, "w", newline="") as f:
        f.write("t_s,v_V\n")
        np.savetxt(f, np.column_stack([trace.times, trace.samples]), fmt="%.17g", delimiter=",")
