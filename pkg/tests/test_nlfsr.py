import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtrng import nlfsr
from mtrng.bits import BitStream
from mtrng.nlfsr import ExpanderState, NlfsrSpec

SPEC4 = nlfsr.default_spec(4)

# x0 XOR x1 at width 4, from 0001, worked by hand: (register, output) per clock
LFSR_TABLE = [
    (0b0001, 1), (0b1000, 0), (0b0100, 0), (0b0010, 0), (0b1001, 1),
    (0b1100, 0), (0b0110, 0), (0b1011, 1), (0b0101, 1), (0b1010, 0),
    (0b1101, 1), (0b1110, 0), (0b1111, 1), (0b0111, 1), (0b0011, 1),
]


def walk(spec, seed, steps):
    regs, outs, s = [], [], seed
    for _ in range(steps):
        regs.append(s)
        s, b = nlfsr.next_register(s, spec)
        outs.append(b)
    return regs, outs, s


def oracle_expand(seed_bits, spec, interval, n_out):
    """Reseed/clock composition through the public state API."""
    chunks = nlfsr.seed_chunks(seed_bits, spec, -(-n_out // interval))
    out, state = [], None
    for chunk in chunks:
        state = ExpanderState.load(spec, chunk, interval) if state is None else nlfsr.reseed(state, chunk)
        for _ in range(interval):
            state, b = nlfsr.clock(state)
            out.append(b)
    return out[:n_out]


def random_bits(seed, n):
    return BitStream.from_bits(np.random.Generator(np.random.PCG64(seed)).integers(0, 2, n))


def test_clock_pure_rotation():
    spec = NlfsrSpec(4, ((0,),))
    state, out = nlfsr.clock(ExpanderState(0b0001, spec))
    assert out == 1 and state.register == 0b1000


def test_lfsr_hand_table():
    spec = NlfsrSpec(4, ((0,), (1,)))
    regs, outs, s = walk(spec, 0b0001, 15)
    assert list(zip(regs, outs)) == LFSR_TABLE
    assert s == 0b0001


def test_default_4bit_visits_all_nonzero_states():
    regs, _, s = walk(SPEC4, 0b0001, 15)
    assert sorted(regs) == list(range(1, 16))
    assert s == 0b0001


def test_default_4bit_with_zero_state_visits_all_16():
    regs, _, s = walk(nlfsr.default_spec(4, include_zero_state=True), 0b0001, 16)
    assert sorted(regs) == list(range(16))
    assert s == 0b0001


@pytest.mark.parametrize("width", [4, 8, 16, 20])
def test_shipped_specs_full_period(width):
    spec = nlfsr.default_spec(width)
    assert nlfsr.period(spec) == nlfsr.PeriodResult(2**width - 1, True)
    assert nlfsr.period(nlfsr.default_spec(width, True)) == nlfsr.PeriodResult(2**width, True)


@pytest.mark.slow
def test_shipped_24bit_spec_full_period():
    assert nlfsr.period(nlfsr.default_spec(24)) == nlfsr.PeriodResult(2**24 - 1, True)
    assert nlfsr.period(nlfsr.default_spec(24, True)) == nlfsr.PeriodResult(2**24, True)


def test_period_doubling_agrees_with_walk():
    for spec in (NlfsrSpec(6, ((0,), (1,))), NlfsrSpec(6, ((0,), (2, 3))), NlfsrSpec(5, ((0,), (2,)))):
        assert spec.nonsingular
        for seed in (1, 5, 17):
            s, n = nlfsr.next_register(seed, spec)[0], 1
            while s != seed:
                s, n = nlfsr.next_register(s, spec)[0], n + 1
            assert nlfsr.period(spec, seed).period == n


def test_period_of_singular_feedback():
    # f = x1 ignores x0, so two states share a successor and 0001 never recurs
    spec = NlfsrSpec(4, ((1,),))
    assert not spec.nonsingular
    assert nlfsr.period(spec, 0b0001) == nlfsr.PeriodResult(None, False)


def test_expand_full_period_example():
    out = nlfsr.expand(BitStream.from_string("0001"), SPEC4, 15, 15).to_bits().tolist()
    assert out == [1, 0, 0, 0, 1, 0, 1, 1, 1, 1, 0, 1, 0, 0, 1]
    assert out == walk(SPEC4, 0b0001, 15)[1]


def test_expand_zero_length():
    assert nlfsr.expand(BitStream.from_bits([]), SPEC4, 15, 0).n_bits == 0


@pytest.mark.parametrize(
    "spec, interval, n_out",
    [
        (SPEC4, 15, 100),
        (nlfsr.default_spec(8), 37, 500),
        (nlfsr.default_spec(24), 37, 1000),
        (nlfsr.default_spec(24), 1024, 3000),
        (nlfsr.default_spec(16, True), 5, 203),
        (NlfsrSpec(26, ((0,), (1,), (5, 9))), 64, 400),
    ],
    ids=["w4", "w8", "w24", "w24-1024", "w16-zero", "w26-fallback"],
)
def test_expand_matches_clock_reseed_oracle(spec, interval, n_out):
    seed = random_bits(spec.width_n * interval, spec.width_n * (-(-n_out // interval)))
    assert nlfsr.expand(seed, spec, interval, n_out).to_bits().tolist() == oracle_expand(seed, spec, interval, n_out)


def test_expand_zero_chunk_handling(caplog):
    seed = BitStream.from_string("0000" + "0001" + "0001")
    with caplog.at_level(logging.WARNING):
        out = nlfsr.expand(seed, SPEC4, 4, 12)
    assert "all-zero" in caplog.text
    assert out.to_bits().tolist() == oracle_expand(seed, SPEC4, 4, 12)


def test_expand_deterministic():
    seed = random_bits(1, 240)
    assert nlfsr.expand(seed, nlfsr.default_spec(), 1024, 10_000) == nlfsr.expand(seed, nlfsr.default_spec(), 1024, 10_000)


def test_expand_avalanche():
    spec = nlfsr.default_spec()
    a, b = random_bits(1, 240), random_bits(2, 240)
    diff = np.mean(nlfsr.expand(a, spec, 1024, 10_000).to_bits() != nlfsr.expand(b, spec, 1024, 10_000).to_bits())
    assert diff >= 0.30
    flipped = a.to_bits().copy()
    flipped[5] ^= 1
    diff1 = np.mean(nlfsr.expand(a, spec, 1024, 10_000).to_bits() != nlfsr.expand(BitStream.from_bits(flipped), spec, 1024, 10_000).to_bits())
    assert diff1 >= 0.30


def test_seed_exhaustion():
    with pytest.raises(nlfsr.SeedExhaustedError):
        nlfsr.expand(random_bits(0, 47), nlfsr.default_spec(), 1024, 1025)


def test_seed_chunks_msb_first():
    assert nlfsr.seed_chunks(BitStream.from_string("00011000"), SPEC4, 2) == [1, 8]


def test_spec_canonical_form_and_serialization():
    spec = NlfsrSpec(4, ((3, 2), (0,), (1,), (1,), (2,)))
    # the duplicate x1 cancels; 3*2 is sorted to 2*3
    assert spec.feedback == ((0,), (2,), (2, 3))
    assert spec.to_line() == "width=4;anf=0,2,2*3"
    assert NlfsrSpec.parse("width=4;anf=0,2,2*3") == spec
    zero = nlfsr.default_spec(8, True)
    assert NlfsrSpec.parse(zero.to_line()) == zero


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 32).flatmap(lambda n: st.tuples(st.just(n), st.lists(st.sets(st.integers(0, n - 1), max_size=4), max_size=6))))
def test_spec_round_trip(case):
    n, monomials = case
    spec = NlfsrSpec(n, tuple(tuple(m) for m in monomials))
    assert NlfsrSpec.parse(spec.to_line()) == spec


def test_spec_validation():
    with pytest.raises(ValueError):
        NlfsrSpec(4, ((4,),))
    with pytest.raises(ValueError):
        NlfsrSpec(2, ((0,),))
    with pytest.raises(ValueError):
        NlfsrSpec.parse("width=4")
    with pytest.raises(ValueError):
        nlfsr.default_spec(12)


def test_expander_state_invariants(caplog):
    with pytest.raises(ValueError):
        ExpanderState(0, SPEC4)
    ExpanderState(0, nlfsr.default_spec(4, True))
    with pytest.raises(ValueError):
        ExpanderState(1, SPEC4, bits_since_reseed=4, reseed_interval=4)
    with pytest.raises(ValueError):
        ExpanderState(16, SPEC4)
    with caplog.at_level(logging.WARNING):
        assert ExpanderState.load(SPEC4, 0).register == 1


def test_clock_counter_wraps():
    state = ExpanderState(1, SPEC4, 0, 3)
    counts = []
    for _ in range(4):
        state, _ = nlfsr.clock(state)
        counts.append(state.bits_since_reseed)
    assert counts == [1, 2, 0, 1]
    assert nlfsr.reseed(ExpanderState(5, SPEC4, 2, 3), 5).register == 1


def test_bitmap():
    img = nlfsr.bitmap(BitStream.from_string("1010"), 2)
    assert img.tolist() == [[1, 0], [1, 0]]
    assert not nlfsr.bitmap(BitStream.from_bits(np.zeros(16)), 4).any()
    with pytest.raises(ValueError):
        nlfsr.bitmap(BitStream.from_string("101"), 2)
