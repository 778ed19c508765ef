import numpy as np

from mtrng import nlfsr, pipeline
from mtrng.chain import ChainConfig
from mtrng.sim import SimParams


def test_seed_demand():
    spec = nlfsr.default_spec(24)
    assert pipeline.seed_demand(1_000_000, spec, 1024) == 24 * 977
    assert pipeline.seed_demand(0, spec, 1024) == 0
    assert pipeline.seed_demand(1024, spec, 1024) == 24


def test_raw_bits_exact_length_and_decimation():
    params = SimParams(seed=3)
    assert pipeline.raw_bits(params, ChainConfig(), 5000).n_bits == 5000
    assert pipeline.raw_bits(params, ChainConfig(sample_decimation=3), 700).n_bits == 700


def test_generate_is_composition():
    params, cfg, spec = SimParams(seed=5), ChainConfig(), nlfsr.default_spec(16)
    res = pipeline.generate(params, cfg, spec, 256, 10_000)
    n_seed = pipeline.seed_demand(10_000, spec, 256)
    assert res.raw == pipeline.raw_bits(params, cfg, n_seed)
    assert res.expanded == nlfsr.expand(res.raw, spec, 256, 10_000)
    assert res.sim_steps == n_seed


def test_stream_balance(stream):
    assert stream.expanded.n_bits == 1_000_000
    assert abs(np.mean(stream.expanded.to_bits()) - 0.5) < 0.01
