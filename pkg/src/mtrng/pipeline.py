"""End-to-end generator: simulate, extract comparator bits, expand.

The comparator yields about one bit per simulated sample. Those raw bits
seed the NLFSR, so a request for ``n_out`` output bits needs only
``width * ceil(n_out / reseed_interval)`` raw bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .bits import BitStream
from .chain import ChainConfig, comparator, high_pass, iv_convert
from .nlfsr import NlfsrSpec, expand
from .sim import SimParams, simulate


@dataclass(frozen=True)
class PipelineResult:
    raw: BitStream  # comparator output used as seed material
    expanded: BitStream
    sim_steps: int


def seed_demand(n_out: int, spec: NlfsrSpec, reseed_interval: int) -> int:
    return spec.width_n * math.ceil(n_out / reseed_interval)


def raw_bits(params: SimParams, cfg: ChainConfig, n_bits: int) -> BitStream:
    """Exactly ``n_bits`` comparator bits from a fresh simulation."""
    steps = n_bits * cfg.sample_decimation
    trace = simulate(params.replace(n_steps=steps))
    return comparator(high_pass(iv_convert(trace, cfg), cfg), cfg)


def generate(params: SimParams, cfg: ChainConfig, spec: NlfsrSpec, reseed_interval: int, n_out: int) -> PipelineResult:
    n_seed = seed_demand(n_out, spec, reseed_interval)
    raw = raw_bits(params, cfg, n_seed)
    return PipelineResult(raw, expand(raw, spec, reseed_interval, n_out), n_seed * cfg.sample_decimation)
