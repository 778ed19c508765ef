import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtrng import analysis, sim
from mtrng.bits import BitStream


def test_slope_series():
    assert np.all(analysis.slope_series(np.full(10, 3.0), 0.1).values == 0)
    ramp = 2.5 * np.arange(20) * 0.1
    assert np.allclose(analysis.slope_series(ramp, 0.1).values, 2.5)
    assert analysis.slope_series([0, 1, 0], 0.5).values.tolist() == [2.0, -2.0]
    assert len(analysis.slope_series(np.arange(7.0), 1.0).values) == 6
    with pytest.raises(ValueError):
        analysis.slope_series([1.0], 1.0)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=300))
def test_histogram_invariants(values):
    h = analysis.histogram(values)
    assert int(h.counts.sum()) == len(values)
    assert np.all(np.diff(h.bin_edges) > 0)
    assert len(h.counts) <= analysis.MAX_BINS + 1


def test_histogram_on_lattice_has_no_straddling_bins():
    x = np.random.Generator(np.random.PCG64(0)).integers(-20, 21, 50_000) * 0.25
    h = analysis.histogram(x)
    k = (h.bin_edges - x.min()) / 0.25
    # edges sit halfway between lattice points
    assert np.allclose(k % 1, 0.5)
    assert h.counts.sum() == len(x)


def exact_gaussian_hist(mu, sigma, amp=1000.0, n=41, span=5.0):
    edges = np.linspace(mu - span * sigma, mu + span * sigma, n + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    return analysis.Histogram(edges, amp * np.exp(-((centers - mu) ** 2) / (2 * sigma**2)))


def test_gaussian_fit_recovers_parameters():
    for mu, sigma in ((0.0, 1.0), (3.2, 0.05), (-40.0, 7.0)):
        fit = analysis.gaussian_fit(exact_gaussian_hist(mu, sigma))
        assert abs(fit.mu - mu) <= 0.01 * sigma
        assert fit.sigma == pytest.approx(sigma, rel=0.01)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-9)


def test_gaussian_fit_symmetric_histogram():
    counts = np.array([1, 4, 9, 15, 20, 15, 9, 4, 1])
    edges = np.arange(10.0)
    fit = analysis.gaussian_fit(analysis.Histogram(edges, counts))
    assert abs(fit.mu - 4.5) < 1.0
    assert fit.sigma > 0 and 0 <= fit.r_squared <= 1


def test_gaussian_fit_degenerate():
    with pytest.raises(ValueError):
        analysis.gaussian_fit(analysis.Histogram(np.arange(6.0), np.array([0, 0, 10, 0, 0])))


def test_default_slopes_are_gaussian():
    trace = sim.simulate(sim.SimParams())
    fit = analysis.gaussian_fit(analysis.histogram(analysis.slope_series(trace.samples, trace.dt).values))
    assert fit.r_squared >= 0.95


def _cell(grid, x, y):
    return np.searchsorted(grid.x_edges, x) - 1, np.searchsorted(grid.y_edges, y) - 1


def test_time_lag_constant_sequence():
    g = analysis.time_lag(np.full(20, 2.0), grid_size=64)
    i, j = np.unravel_index(np.argmax(g.values), g.values.shape)
    width = g.x_edges[1] - g.x_edges[0]
    assert abs(g.x_centers[i] - 2.0) <= width and abs(g.y_centers[j] - 2.0) <= width
    assert g.values.max() == 0.0


def test_time_lag_alternating_sequence():
    # 7 values give 6 lag pairs: three (a, b) and three (b, a)
    a, b = 1.0, 3.0
    g = analysis.time_lag([a, b] * 3 + [a], grid_size=101, alpha=0.05)
    ab, ba = _cell(g, a, b), _cell(g, b, a)
    assert g.values[ab] == pytest.approx(0.0, abs=1e-9)
    assert g.values[ba] == pytest.approx(0.0, abs=1e-9)
    assert g.values[_cell(g, a, a)] < -3 and g.values[_cell(g, b, b)] < -3
    # an even count of values leaves one extra (a, b) pair: peaks in ratio 3:2
    g6 = analysis.time_lag([a, b] * 3, grid_size=101, alpha=0.05)
    assert g6.values[_cell(g6, a, b)] == pytest.approx(0.0, abs=1e-9)
    assert g6.values[_cell(g6, b, a)] == pytest.approx(math.log10(2 / 3), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=60))
def test_time_lag_max_is_zero(values):
    g = analysis.time_lag(values, grid_size=32)
    assert abs(g.values.max()) <= 1e-9
    assert np.all(g.values <= 1e-9)


def test_time_lag_errors():
    with pytest.raises(ValueError):
        analysis.time_lag([1.0], grid_size=8)
    with pytest.raises(ValueError):
        analysis.time_lag([1.0, 2.0], grid_size=8, alpha=0.0)


def test_time_lag_diagonal_aggregation_on_default_trace():
    trace = sim.simulate(sim.SimParams())
    q = sim.integrate_charge(trace, trace.dt).values
    g = analysis.time_lag(q)
    assert analysis.diagonal_fraction(g, (q.max() - q.min()) / 10) >= 0.6
    assert abs(g.values.max()) <= 1e-9


def test_bit_balance():
    b = analysis.bit_balance(BitStream.from_bits([1, 0] * 32))
    assert (b.ones_fraction, b.zeros_fraction) == (0.5, 0.5)
    b = analysis.bit_balance(BitStream.from_bits([1] * 100))
    assert (b.ones_fraction, b.zeros_fraction) == (1.0, 0.0)
    with pytest.raises(ValueError):
        analysis.bit_balance(BitStream.from_bits([]))


def test_exports_round_trip(tmp_path):
    g = analysis.time_lag(np.random.Generator(np.random.PCG64(1)).normal(size=50), grid_size=16)
    analysis.write_tl_grid(tmp_path / "tl.csv", g)
    back = analysis.read_tl_grid(tmp_path / "tl.csv")
    assert np.array_equal(back.values, g.values) and back.alpha == g.alpha and back.k_norm == g.k_norm
    h = exact_gaussian_hist(0.0, 1.0)
    analysis.write_histogram_json(tmp_path / "h.json", h, analysis.gaussian_fit(h))
    doc = json.loads((tmp_path / "h.json").read_text())
    assert {"bin_edges", "counts", "mu", "sigma", "amplitude", "r_squared"} <= doc.keys()
