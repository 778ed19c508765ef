import pytest

from mtrng import pipeline
from mtrng.config import RunConfig


@pytest.fixture(scope="session")
def stream():
    """10^6 expanded bits from the default pipeline (seed 0)."""
    cfg = RunConfig()
    return pipeline.generate(cfg.sim_params(), cfg.chain_config(), cfg.nlfsr_spec(), cfg["nlfsr.reseed_interval"], 1_000_000)
