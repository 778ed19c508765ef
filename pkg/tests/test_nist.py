import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import nist_oracle as O
from mtrng import nist
from mtrng.bits import BitStream

SMALL = nist.TestParams(enforce_min_length=False)

FIXTURES = {
    "f10": "1011010101",
    "pi20": "11001001000011111101",
    "mix20": "11100010110100111000",
    "cyc20": "11010110100010000001",
}

# (test function, params, oracle) per test name; fixture params are chosen so
# every test is applicable at n <= 20
CASES = {
    "frequency": (nist.test_frequency, SMALL, O.frequency),
    "block_frequency": (nist.test_block_frequency, SMALL.replace(block_length_M=4), lambda b: O.block_frequency(b, 4)),
    "cumulative_sums": (nist.test_cumulative_sums, SMALL, O.cumulative_sums),
    "runs": (nist.test_runs, SMALL, O.runs),
    "longest_run": (nist.test_longest_run, SMALL, lambda b: O.longest_run(b, 8)),
    "fft": (nist.test_fft, SMALL, O.fft),
    "nonoverlapping_template": (
        nist.test_nonoverlapping_template,
        SMALL.replace(template=(0, 0, 1), template_blocks=2),
        lambda b: O.nonoverlapping_template(b, (0, 0, 1), 2),
    ),
    "serial": (nist.test_serial, SMALL.replace(serial_m=3), lambda b: O.serial(b, 3)),
    "approximate_entropy": (nist.test_approximate_entropy, SMALL.replace(apen_m=2), lambda b: O.approximate_entropy(b, 2)),
    "random_excursions": (nist.test_random_excursions, SMALL, O.random_excursions),
    "random_excursions_variant": (nist.test_random_excursions_variant, SMALL, O.random_excursions_variant),
}

# oracle p-values, computed once with nist_oracle (mpmath, 40 digits) and frozen
FROZEN = {
    ("f10", "frequency"): [0.5270892568655381],
    ("f10", "block_frequency"): [0.6065306597126334],
    ("f10", "cumulative_sums"): [0.9417406290800415, 0.9417406290800415],
    ("f10", "runs"): [0.005657597815064363],
    ("f10", "fft"): [0.468159909854428],
    ("f10", "nonoverlapping_template"): [0.5488116360940264],
    ("f10", "serial"): [0.09157819444367091, 0.1353352832366127],
    ("f10", "approximate_entropy"): [0.08060754817749487],
    ("f10", "random_excursions"): [0.027255412845785705],
    ("f10", "random_excursions_variant"): [0.9243512016720518],
    ("pi20", "frequency"): [0.654720846018577],
    ("pi20", "block_frequency"): [0.10906415794977237],
    ("pi20", "cumulative_sums"): [0.7276215109126457, 0.3593394986033531],
    ("pi20", "runs"): [0.684332786536565],
    ("pi20", "longest_run"): [0.5665491352869753],
    ("pi20", "fft"): [0.3049017881787883],
    ("pi20", "nonoverlapping_template"): [0.34415378686541237],
    ("pi20", "serial"): [0.5918327134598556, 0.4065696597405991],
    ("pi20", "approximate_entropy"): [0.6310559900300656],
    ("pi20", "random_excursions"): [0.2966423823357088],
    ("pi20", "random_excursions_variant"): [0.9999921373060001],
    ("mix20", "frequency"): [1.0],
    ("mix20", "block_frequency"): [0.5494159513527802],
    ("mix20", "cumulative_sums"): [0.9179156961903157, 0.9179156961903157],
    ("mix20", "runs"): [1.0],
    ("mix20", "longest_run"): [0.6751679592433059],
    ("mix20", "fft"): [0.3049017881787883],
    ("mix20", "nonoverlapping_template"): [1.0],
    ("mix20", "serial"): [0.938448064449895, 0.6703200460356393],
    ("mix20", "approximate_entropy"): [0.9377198912437326],
    ("mix20", "random_excursions"): [1.5855769976680146e-07],
    ("mix20", "random_excursions_variant"): [0.954067377032486],
    ("cyc20", "frequency"): [0.37109336952269756],
    ("cyc20", "block_frequency"): [0.5494159513527802],
    ("cyc20", "cumulative_sums"): [0.5259106320143053, 0.23504575159804694],
    ("cyc20", "runs"): [0.5142808720041301],
    ("cyc20", "longest_run"): [0.6392924239189945],
    ("cyc20", "fft"): [0.3049017881787883],
    ("cyc20", "nonoverlapping_template"): [0.11844182901380369],
    ("cyc20", "serial"): [0.6626272662068446, 0.4493289641172216],
    ("cyc20", "approximate_entropy"): [0.7227396091970647],
    ("cyc20", "random_excursions"): [0.0028126500224637976],
    ("cyc20", "random_excursions_variant"): [0.9999340412045143],
}


def bits_of(s: str) -> np.ndarray:
    return np.array([int(c) for c in s], dtype=np.uint8)


@pytest.mark.parametrize("key", sorted(FROZEN), ids=lambda k: f"{k[0]}-{k[1]}")
def test_fixture_matches_frozen_oracle(key):
    fixture, name = key
    fn, params, _ = CASES[name]
    entry = fn(bits_of(FIXTURES[fixture]), params)
    assert entry.applicable
    assert entry.p_values == pytest.approx(FROZEN[key], abs=1e-6)


@pytest.mark.parametrize("key", sorted(FROZEN), ids=lambda k: f"{k[0]}-{k[1]}")
def test_frozen_values_reproduce_from_oracle(key):
    fixture, name = key
    live = [float(p) for p in CASES[name][2]([int(c) for c in FIXTURES[fixture]])]
    assert live == pytest.approx(FROZEN[key], abs=1e-12)


@pytest.mark.parametrize(
    "fn, params, bits, expected",
    [
        (nist.test_frequency, SMALL, "1011010101", [0.527089]),
        (nist.test_block_frequency, SMALL.replace(block_length_M=3), "0110011010", [0.801252]),
        (nist.test_runs, SMALL, "1001101011", [0.147232]),
        (nist.test_serial, SMALL.replace(serial_m=3), "0011011101", [0.808792, 0.670320]),
        (nist.test_approximate_entropy, SMALL.replace(apen_m=3), "0100110101", [0.261961]),
    ],
    ids=["frequency", "block", "runs", "serial", "apen"],
)
def test_published_worked_examples(fn, params, bits, expected):
    assert fn(bits_of(bits), params).p_values == pytest.approx(expected, abs=1e-6)


def test_runs_statistic_on_ten_bit_example():
    e = nist.test_runs(bits_of("1001101011"), SMALL)
    assert e.details["v_obs"] == 7
    pi = 0.6
    assert e.p_values[0] == pytest.approx(math.erfc(abs(7 - 2 * 10 * pi * (1 - pi)) / (2 * math.sqrt(20) * pi * (1 - pi))), abs=1e-12)


def test_excursion_states_match_oracle():
    b = FIXTURES["cyc20"]
    e = nist.test_random_excursions(bits_of(b), SMALL)
    assert e.details["J"] == 3
    for x, p in O.excursion_state_ps([int(c) for c in b]).items():
        assert e.details["states"][str(x)]["p_value"] == pytest.approx(float(p), abs=1e-6)
    v = nist.test_random_excursions_variant(bits_of(b), SMALL)
    for x, p in O.variant_state_ps([int(c) for c in b]).items():
        assert v.details["states"][str(x)]["p_value"] == pytest.approx(float(p), abs=1e-6)


def test_excursion_visit_counts_by_enumeration():
    b = FIXTURES["cyc20"]
    cycles = O.walk_cycles([int(c) for c in b])
    e = nist.test_random_excursions(bits_of(b), SMALL)
    for x in (-4, -3, -2, -1, 1, 2, 3, 4):
        nu = [0] * 6
        for c in cycles:
            nu[min(c.count(x), 5)] += 1
        assert e.details["states"][str(x)]["nu"] == nu


def test_longest_run_6272_bit_fixture():
    bits = np.random.Generator(np.random.PCG64(6272)).integers(0, 2, 6272, dtype=np.uint8)
    e = nist.test_longest_run(bits)
    assert e.details["M"] == 128
    assert e.p_values[0] == pytest.approx(float(O.longest_run(bits.tolist(), 128)[0]), abs=1e-6)


def test_block_frequency_one_saturated_block():
    bits = bits_of("1111" + "0101" * 4)
    e = nist.test_block_frequency(bits, SMALL.replace(block_length_M=4))
    assert e.p_values[0] == pytest.approx(float(O.block_frequency(bits.tolist(), 4)[0]), abs=1e-9)


def test_block_frequency_balanced_blocks_give_one():
    assert nist.test_block_frequency(np.tile([1, 0], 500)).p_values == [1.0]


def test_cusum_small_fixture_series():
    bits = bits_of(FIXTURES["pi20"])
    assert nist.test_cumulative_sums(bits, SMALL).p_values == pytest.approx([float(p) for p in O.cumulative_sums(bits.tolist())], abs=1e-9)


# --- degenerate and adversarial inputs ---

def test_frequency_all_zeros_and_alternation():
    assert nist.test_frequency(np.zeros(1000, np.uint8)).p_values[0] < 1e-10
    assert not nist.test_frequency(np.zeros(1000, np.uint8)).passed
    for n in (100, 101, 1000):
        e = nist.test_frequency(np.arange(n) % 2)
        assert e.passed and e.p_values[0] > 0.9


def test_gating():
    assert not nist.test_frequency(np.ones(99)).applicable
    assert not nist.test_block_frequency(np.ones(100), nist.TestParams(block_length_M=128)).applicable
    unbalanced = np.r_[np.ones(80), np.zeros(20)]
    e = nist.test_runs(unbalanced)
    assert not e.applicable and "prerequisite" in e.note
    assert not nist.test_longest_run(np.ones(127)).applicable
    assert not nist.test_nonoverlapping_template(np.zeros(100), nist.TestParams(template=(1,) * 20, template_blocks=8)).applicable


def test_runs_alternation_fails():
    assert nist.test_runs(np.arange(1000) % 2).p_values[0] < 1e-10


def test_cusum_all_ones():
    e = nist.test_cumulative_sums(np.ones(1000))
    assert e.details["z"] == [1000, 1000]
    assert max(e.p_values) < 1e-10


def test_longest_run_all_ones_and_category_edge():
    assert nist.test_longest_run(np.ones(128)).p_values[0] < 1e-10
    # longest run 0 falls into the lowest (<= 1) category
    e = nist.test_longest_run(np.zeros(128, np.uint8))
    assert e.details["nu"][0] == 16


def test_fft_alternation_closed_form():
    n = 1000
    e = nist.test_fft(np.arange(n) % 2)
    # only the Nyquist bin (index n/2, outside the first n/2) is non-zero
    d = (n / 2 - 0.95 * n / 2) / math.sqrt(n * 0.95 * 0.05 / 4)
    assert e.details["n1"] == n // 2
    assert e.details["d"] == pytest.approx(d, rel=1e-12)
    assert e.p_values[0] == pytest.approx(math.erfc(d / math.sqrt(2)), rel=1e-9)
    assert not nist.test_fft(np.zeros(1000)).passed


def test_fft_complement_invariant():
    bits = np.random.Generator(np.random.PCG64(3)).integers(0, 2, 4096)
    assert nist.test_fft(bits).p_values == nist.test_fft(1 - bits).p_values


def test_template_in_all_zeros_exact_chi2():
    n, N, m = 1000, 8, 3
    e = nist.test_nonoverlapping_template(np.zeros(n), nist.TestParams(template=(1, 1, 1), template_blocks=N))
    M = n // N
    mu = (M - m + 1) / 2**m
    var = M * (1 / 2**m - (2 * m - 1) / 2 ** (2 * m))
    assert e.details["templates"]["111"]["chi2"] == pytest.approx(N * mu**2 / var, rel=1e-12)


def test_template_one_in_alternating_block():
    n, N = 1000, 8
    e = nist.test_nonoverlapping_template(np.arange(n) % 2, nist.TestParams(template=(1,), template_blocks=N))
    M = n // N
    mu, var = M / 2, M * (1 / 2 - 1 / 4)
    # each block of 125 alternating bits starting at an even offset holds 63 ones
    w = np.array([np.count_nonzero((np.arange(n) % 2)[i * M : (i + 1) * M]) for i in range(N)])
    assert e.details["templates"]["1"]["chi2"] == pytest.approx(float(np.sum((w - mu) ** 2) / var), rel=1e-12)


def test_aperiodic_template_count():
    # the standard catalogue holds 148 aperiodic templates of length 9
    assert len(nist.aperiodic_templates(9)) == 148


def test_serial_m1_equals_frequency():
    for seed in range(5):
        bits = np.random.Generator(np.random.PCG64(seed)).integers(0, 2, 500)
        s = nist.test_serial(bits, SMALL.replace(serial_m=1))
        assert s.p_values[0] == pytest.approx(nist.test_frequency(bits).p_values[0], abs=1e-12)


def test_serial_all_zeros():
    assert max(nist.test_serial(np.zeros(10_000), nist.TestParams(serial_m=5)).p_values) < 1e-10


def test_serial_pattern_counts_sum_to_n():
    bits = np.random.Generator(np.random.PCG64(1)).integers(0, 2, 777)
    for m in (1, 3, 7):
        assert sum(O._pattern_counts(bits.tolist(), m).values()) == 777
        assert np.bincount(nist._windows(bits.astype(np.int64), m, wrap=True), minlength=1 << m).sum() == 777


def test_apen_all_zeros():
    e = nist.test_approximate_entropy(np.zeros(10_000), nist.TestParams(apen_m=3))
    assert e.details["apen"] == pytest.approx(0.0, abs=1e-15)
    assert e.details["chi2"] == pytest.approx(2 * 10_000 * math.log(2))
    assert e.p_values[0] < 1e-10


def _de_bruijn(k: int) -> list[int]:
    a = [0] * (2 * k)
    seq = []

    def db(t, p):
        if t > k:
            if k % p == 0:
                seq.extend(a[1 : p + 1])
        else:
            a[t] = a[t - p]
            db(t + 1, p)
            for j in range(a[t - p] + 1, 2):
                a[t] = j
                db(t + 1, t)

    db(1, 1)
    return seq


def test_apen_de_bruijn_near_maximal():
    m = 3
    seq = _de_bruijn(m + 1)
    assert len(seq) == 16
    apen = float(O.apen_value(seq, m))
    e = nist.test_approximate_entropy(np.array(seq), SMALL.replace(apen_m=m))
    assert e.details["apen"] == pytest.approx(apen, abs=1e-12)
    # every (m+1)-pattern appears exactly once with wraparound: ApEn = ln 2
    assert apen == pytest.approx(math.log(2), abs=1e-12)
    assert e.p_values[0] == pytest.approx(1.0)


def test_apen_small_fixture():
    bits = FIXTURES["pi20"][:16]
    e = nist.test_approximate_entropy(bits_of(bits), SMALL.replace(apen_m=2))
    assert e.p_values[0] == pytest.approx(float(O.approximate_entropy([int(c) for c in bits], 2)[0]), abs=1e-6)


def test_excursions_gating():
    short = np.random.Generator(np.random.PCG64(0)).integers(0, 2, 1000)
    e = nist.test_random_excursions(short)
    assert not e.applicable and e.p_values == []
    z = nist.test_random_excursions(np.zeros(1000))
    assert not z.applicable
    # the walk never returns: only the trailing partial excursion counts
    assert z.details["J"] == 1
    assert not nist.test_random_excursions_variant(np.zeros(1000)).applicable


def test_suite_all_zeros_fails_everything_applicable():
    report = nist.run_suite(np.zeros(1_000_000, np.uint8))
    applicable = [e for e in report.entries if e.applicable]
    assert len(applicable) >= 8
    assert not any(e.passed for e in applicable)
    assert not report.all_passed


def test_suite_deterministic_and_renders():
    bits = np.random.Generator(np.random.PCG64(11)).integers(0, 2, 20_000)
    a, b = nist.run_suite(bits), nist.run_suite(BitStream.from_bits(bits))
    assert a.to_json() == b.to_json()
    table = a.to_table()
    assert "Post-processing" in table and "Frequency" in table
    assert len(a.entries) == 11


def test_pass_iff_all_p_at_least_alpha():
    e = nist.TestEntry("x", [0.5, 0.009], True, 0.01)
    assert not e.passed
    assert nist.TestEntry("x", [0.01, 0.5], True, 0.01).passed
    assert not nist.TestEntry("x", [], False, 0.01).passed


def test_pcg64_frequency_p_values_uniform():
    from scipy.stats import kstest

    ps = [nist.test_frequency(np.random.Generator(np.random.PCG64(s)).integers(0, 2, 10_001)).p_values[0] for s in range(300)]
    assert kstest(ps, "uniform").pvalue > 0.001


bit_arrays = st.lists(st.integers(0, 1), min_size=100, max_size=400).map(np.array)


@settings(max_examples=60, deadline=None)
@given(bit_arrays)
def test_complement_leaves_frequency_family_unchanged(bits):
    for fn in (nist.test_frequency, nist.test_block_frequency, nist.test_cumulative_sums, nist.test_runs):
        a, b = fn(bits, SMALL.replace(block_length_M=10)), fn(1 - bits, SMALL.replace(block_length_M=10))
        assert a.applicable == b.applicable
        assert a.p_values == pytest.approx(b.p_values, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(bit_arrays)
def test_reversal_swaps_cusum_directions(bits):
    fwd = nist.test_cumulative_sums(bits).p_values
    bwd = nist.test_cumulative_sums(bits[::-1].copy()).p_values
    assert fwd[0] == bwd[1] and fwd[1] == bwd[0]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1100, max_size=1500).map(np.array))
def test_p_values_in_unit_interval(bits):
    for e in nist.run_suite(bits, nist.TestParams(serial_m=4, apen_m=2, template_m=4)).entries:
        assert all(0.0 <= p <= 1.0 for p in e.p_values)
        assert e.passed == (e.applicable and all(p >= e.significance for p in e.p_values))
