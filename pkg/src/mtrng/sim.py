"""Kinetic Monte Carlo model of two-state ferroelectric dipole switching.

Every dipole holds one of two polarization states and flips as an
independent Poisson process with the Arrhenius rate ``A exp(-E / kT)``.
Each step the net polarization change shifts the bound charge by
``-dP / L``; the resistance is ``r0 / |rho_B|`` and the current follows
from Ohm's law (or, opt-in, from Poole-Frenkel conduction).

Quantities are in a coherent model-unit system: polarization magnitudes
default to +/-1 and ``L`` to 1, so ``|rho_B|`` stays near ``rho_init``.
The defaults are the ``paper-power`` calibration: 0.05 V across a mean
resistance of 5e4 ohm, i.e. about 1 uA and 0.05 uW.

Random numbers come from numpy's PCG64, which is platform independent.
Consumption order is part of the contract: ``n_dipoles`` uniforms to draw
the initial states, then exactly ``n_dipoles`` uniforms per step.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BOLTZMANN_EV = 8.617333262e-5  # eV/K
MAX_RATE_DT = 0.1
_CHUNK_DRAWS = 1 << 21


class CouplingMode(str, enum.Enum):
    OHMIC = "OHMIC"
    POOLE_FRENKEL = "POOLE_FRENKEL"


@dataclass(frozen=True)
class SimParams:
    n_dipoles: int = 1000
    prefactor_A: float = 1000.0
    barrier_E: float = 0.2
    temperature_T: float = 300.0
    bias_V: float = 0.05
    r0: float = 5.0e4
    length_L: float = 1.0
    p_low: float = -1.0
    p_high: float = 1.0
    dt: float = 0.067
    n_steps: int = 100_000
    seed: int = 0
    coupling_mode: CouplingMode = CouplingMode.OHMIC
    j0: float = 1.0e-2
    beta: float = 1.0e-3
    rho_floor: float = 1.0e-6
    rho_init: float = 1.0
    # Poole-Frenkel only: device area, zero-offset field and the
    # length that maps bound-charge changes onto field changes.
    area: float = 1.0e-4
    eps_init: float = 1.0e6
    field_length: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "coupling_mode", CouplingMode(self.coupling_mode))
        if self.n_dipoles < 1:
            raise ValueError("n_dipoles must be >= 1")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.prefactor_A < 0 or self.barrier_E < 0:
            raise ValueError("prefactor_A and barrier_E must be non-negative")
        if not self.temperature_T > 0:
            raise ValueError("temperature_T must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.p_low < self.p_high:
            raise ValueError("p_low must be below p_high")
        if not self.rho_floor > 0:
            raise ValueError("rho_floor must be positive")
        if not self.length_L > 0:
            raise ValueError("length_L must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if switching_rate(self) * self.dt > MAX_RATE_DT:
            raise ValueError(
                f"rate*dt = {switching_rate(self) * self.dt:.4g} exceeds {MAX_RATE_DT}; "
                "reduce dt or the switching rate"
            )

    def replace(self, **changes) -> "SimParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["coupling_mode"] = self.coupling_mode.value
        return d


@dataclass(frozen=True)
class DipoleState:
    states: np.ndarray  # bool, True = P2 (p_high)
    step_index: int = 0


@dataclass(frozen=True)
class CurrentTrace:
    dt: float
    samples: np.ndarray
    meta: SimParams | None = None

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, len(self.samples) + 1)


@dataclass(frozen=True)
class ChargeTrace:
    window: float
    values: np.ndarray
    dt: float = field(default=0.0)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def switching_rate(params: SimParams) -> float:
    """Arrhenius switching rate in Hz."""
    return params.prefactor_A * math.exp(-params.barrier_E / (BOLTZMANN_EV * params.temperature_T))


def flip_probability(params: SimParams) -> float:
    # exact Poisson form; equals rate*dt to first order
    return -math.expm1(-switching_rate(params) * params.dt)


PRESETS = {
    "paper-power": SimParams(),
}


def initial_state(params: SimParams, rng: np.random.Generator) -> DipoleState:
    return DipoleState(rng.random(params.n_dipoles) < 0.5, 0)


def step(state: DipoleState, params: SimParams, rng: np.random.Generator) -> DipoleState:
    """Advance one time step; consumes exactly ``n_dipoles`` uniforms."""
    flips = rng.random(params.n_dipoles) < flip_probability(params)
    return DipoleState(state.states ^ flips, state.step_index + 1)


def net_polarization(state: DipoleState, params: SimParams) -> float:
    n_high = int(np.count_nonzero(state.states))
    n = len(state.states)
    return (n_high * params.p_high + (n - n_high) * params.p_low) / n


def bound_charge(delta_P, params: SimParams):
    """Bound-charge change ``-dP / L`` for a uniform polarization change."""
    return -delta_P / params.length_L


def resistance(rho_B, params: SimParams):
    """``r0 / |rho_B|`` with ``|rho_B|`` floored at ``rho_floor``."""
    return params.r0 / np.maximum(np.abs(rho_B), params.rho_floor)


def pf_current_density(eps_field, params: SimParams):
    """Poole-Frenkel current density ``j0 exp(beta sqrt(eps))``."""
    eps = np.asarray(eps_field, dtype=float)
    if np.any(eps < 0):
        raise ValueError("electric field must be non-negative")
    out = params.j0 * np.exp(params.beta * np.sqrt(eps))
    return float(out) if out.ndim == 0 else out


def _high_counts(params: SimParams, rng: np.random.Generator, state: DipoleState) -> np.ndarray:
    """Number of P2 dipoles after each step, drawing exactly as repeated step() would."""
    p = flip_probability(params)
    n = params.n_dipoles
    counts = np.empty(params.n_steps, dtype=np.int64)
    states = state.states
    chunk = max(1, _CHUNK_DRAWS // n)
    done = 0
    while done < params.n_steps:
        k = min(chunk, params.n_steps - done)
        flips = rng.random((k, n)) < p
        # row-major draws: row j is the j-th step's n_dipoles uniforms
        path = np.logical_xor.accumulate(flips, axis=0)
        path ^= states
        counts[done:done + k] = np.count_nonzero(path, axis=1)
        states = path[-1]
        done += k
    return counts


def bound_charge_path(params: SimParams) -> np.ndarray:
    """rho_B after each step, accumulated from ``rho_init``."""
    rng = make_rng(params.seed)
    state = initial_state(params, rng)
    n = params.n_dipoles
    n0 = int(np.count_nonzero(state.states))
    counts = _high_counts(params, rng, state)
    span = params.p_high - params.p_low
    # P = p_low + span * count / n, so dP between steps depends only on count changes
    delta_counts = np.diff(counts, prepend=n0)
    delta_P = span * delta_counts / n
    return params.rho_init + np.cumsum(bound_charge(delta_P, params))


def simulate(params: SimParams) -> CurrentTrace:
    rho = bound_charge_path(params)
    if params.coupling_mode is CouplingMode.OHMIC:
        current = params.bias_V / resistance(rho, params)
    else:
        # d(rho_B) = -d(eps)/L_field  =>  eps = eps_init - L_field * (rho_B - rho_init)
        eps = np.maximum(params.eps_init - params.field_length * (rho - params.rho_init), 0.0)
        current = pf_current_density(eps, params) * params.area
    current = np.asarray(current, dtype=float)
    return CurrentTrace(params.dt, current, params)


def integrate_charge(trace: CurrentTrace, window: float) -> ChargeTrace:
    """Charge per window, ``sum(I * dt)``; a trailing partial window is dropped."""
    k = round(window / trace.dt)
    if k < 1 or abs(k * trace.dt - window) > 1e-9 * window:
        raise ValueError(f"window {window} is not a positive integer multiple of dt {trace.dt}")
    m = len(trace.samples) // k
    q = (trace.samples[: m * k] * trace.dt).reshape(m, k).sum(axis=1)
    return ChargeTrace(window, q, trace.dt)


def power(trace: CurrentTrace) -> float:
    """Mean electrical power in watts (OHMIC traces)."""
    V = trace.meta.bias_V if trace.meta is not None else float("nan")
    return float(np.mean(trace.samples) * V)


# --- CSV I/O -------------------------------------------------------------

def _write_columns(path, header: str, t: np.ndarray, y: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        f.write(header + "\n")
        np.savetxt(f, np.column_stack([t, y]), fmt="%.17g", delimiter=",")


def _read_columns(path, header: str) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    with open(path) as f:
        first = f.readline().strip()
        if first != header:
            raise ValueError(f"{path}: expected header {header!r}, got {first!r}")
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    if data.size == 0:
        return np.empty(0), np.empty(0)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns")
    return data[:, 0], data[:, 1]


def _uniform_dt(path, t: np.ndarray) -> float:
    if len(t) == 0:
        raise ValueError(f"{path}: empty trace")
    if len(t) == 1:
        return float(t[0])
    dt = (t[-1] - t[0]) / (len(t) - 1)
    if not np.allclose(np.diff(t), dt, rtol=1e-6, atol=0):
        raise ValueError(f"{path}: samples are not uniformly spaced")
    return float(dt)


def write_trace_csv(path, trace: CurrentTrace) -> None:
    _write_columns(path, "t_s,i_A", trace.times, trace.samples)


def read_trace_csv(path) -> CurrentTrace:
    t, i = _read_columns(path, "t_s,i_A")
    return CurrentTrace(_uniform_dt(path, t), i)


def write_charge_csv(path, charge: ChargeTrace) -> None:
    t = charge.window * np.arange(1, len(charge.values) + 1)
    _write_columns(path, "t_s,q_C", t, charge.values)


def read_charge_csv(path) -> ChargeTrace:
    t, q = _read_columns(path, "t_s,q_C")
    return ChargeTrace(_uniform_dt(path, t), q)
