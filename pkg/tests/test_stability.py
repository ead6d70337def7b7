import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrsctl.errors import InvalidArgument
from nrsctl.experiment import EventList, ExperimentConfig, default_detunings, inject_dead_time
from nrsctl.pulse import canonical_motion
from nrsctl.reconstruction import NoiseFitter
from nrsctl.stability import (
    AllanSeries,
    allan_curve,
    allan_deviation,
    bin_events,
    default_taus,
    simulate_drifting_run,
    sliding_csv,
    sliding_deviations,
    sliding_windows,
)


def uniform_events(n=6000, duration=600.0, seed=0, dropouts=()):
    rng = np.random.default_rng(seed)
    lab = np.sort(rng.uniform(0, duration, n))
    ev = EventList(np.full(n, 50.0), np.zeros(n), lab, (0.0,), None, (0.0, duration))
    return inject_dead_time(ev, dropouts) if dropouts else ev


def test_allan_examples():
    assert allan_deviation([3.0, 3.0, 3.0]) == 0.0
    assert allan_deviation([0.0, 2.0, 0.0]) == pytest.approx(np.sqrt(2.0))
    assert allan_deviation([0.0, 2.0]) == pytest.approx(np.sqrt(2.0))
    with pytest.raises(InvalidArgument):
        allan_deviation([1.0])


@settings(max_examples=50, deadline=None)
@given(
    y=st.lists(st.floats(-100, 100), min_size=2, max_size=30),
    c=st.floats(-1e3, 1e3),
    k=st.floats(-10, 10),
)
def test_allan_shift_and_scale(y, c, k):
    base = allan_deviation(y)
    assert base >= 0
    assert allan_deviation(np.asarray(y) + c) == pytest.approx(base, abs=1e-9 * (1 + abs(c)))
    assert allan_deviation(k * np.asarray(y)) == pytest.approx(abs(k) * base, rel=1e-9, abs=1e-12)


def test_allan_normalization_monte_carlo():
    rng = np.random.default_rng(7)
    sigma = 3.0
    draws = rng.normal(0, sigma, size=(10_000, 8))
    d = np.diff(draws, axis=1)
    est = np.sum(d * d, axis=1) / (2 * 7)
    assert est.mean() == pytest.approx(sigma**2, rel=0.05)


def test_equal_time_sample_count():
    ev = uniform_events()
    samples = bin_events(ev, 200.0, "equal_time")
    assert len(samples) == 3
    assert [s.window for s in samples] == [(0.0, 200.0), (200.0, 400.0), (400.0, 600.0)]


def test_equal_time_partitions_events():
    ev = uniform_events(duration=600.0)
    samples = bin_events(ev, 70.0, "equal_time")
    lab = np.concatenate([s.lab_time for s in samples])
    assert np.all(np.diff(lab) > 0)
    assert lab.size == np.sum(ev.lab_time < 8 * 70.0)


def test_equal_counts_quota():
    ev = uniform_events(n=6000)
    samples = bin_events(ev, 50.0, "equal_counts")
    sizes = {len(s) for s in samples}
    assert sizes == {500}
    assert len(samples) == 12


def test_dropout_behaviour_of_both_modes():
    ev = uniform_events(n=60_000, dropouts=[(300.0, 30.0)])
    timed = bin_events(ev, 30.0, "equal_time")
    counts = np.array([len(s) for s in timed])
    assert counts[10] == 0
    assert np.sum(counts < 0.5 * np.median(counts)) == 1
    quota = bin_events(ev, 30.0, "equal_counts")
    sizes = np.array([len(s) for s in quota])
    assert np.all(sizes == sizes[0])
    live = np.array([s.live_time for s in quota])
    # every count-based sample spans roughly the same live time
    assert live.max() / live.min() < 1.2


def test_single_sample_is_an_error():
    with pytest.raises(InvalidArgument):
        bin_events(uniform_events(), 400.0)
    with pytest.raises(InvalidArgument):
        bin_events(uniform_events(), -1.0)
    with pytest.raises(InvalidArgument):
        bin_events(uniform_events(), 10.0, "equal_vibes")


def test_sliding_windows_with_stride_tau_match_bins():
    ev = uniform_events()
    slide = sliding_windows(ev, 60.0, 60.0)
    binned = bin_events(ev, 60.0)
    assert len(slide) == len(binned)
    for a, b in zip(slide, binned):
        np.testing.assert_array_equal(a.lab_time, b.lab_time)


def test_default_tau_ladder():
    ev = uniform_events(n=600_000)
    taus = default_taus(ev)
    assert taus[0] >= 600.0 / 256 * (1 - 1e-9)
    assert taus[-1] <= 300.0 * (1 + 1e-9)
    ratios = taus[1:] / taus[:-1]
    np.testing.assert_allclose(ratios, 10 ** 0.1)


def test_allan_series_csv_roundtrip():
    s = AllanSeries(((1.0, 2.0, 1.5, 2.5, 10), (2.0, 1.4, 1.0, 1.8, 5)))
    back = AllanSeries.from_csv(s.to_csv())
    assert back.points == s.points
    assert s.to_csv().splitlines()[0] == "tau_s,sigma_zs,err_lo,err_hi,n"
    with pytest.raises(InvalidArgument):
        AllanSeries(((2.0, 1.0, 0.5, 1.5, 3), (1.0, 1.0, 0.5, 1.5, 3)))


@pytest.fixture(scope="module")
def pipeline():
    config = ExperimentConfig(
        dt_ns=0.5, time_bin_ns=2.0, detunings=tuple(default_detunings(13)),
        total_counts=600_000, run_length_s=120.0, sweep_period_s=2.0,
        motion=canonical_motion("enhanced_excitation"),
    )
    fitter = NoiseFitter(config, config.motion, "linear_drift")
    return config, fitter


def test_drifting_run_shares_normalization(pipeline):
    config, _ = pipeline
    flat = simulate_drifting_run(config, np.zeros(12), 10.0, seed=1)
    assert abs(len(flat) - config.total_counts) < 5 * np.sqrt(config.total_counts)
    assert flat.window == (0.0, 120.0)
    again = simulate_drifting_run(config, np.zeros(12), 10.0, seed=1)
    np.testing.assert_array_equal(flat.lab_time, again.lab_time)


def test_white_drift_gives_inverse_sqrt_scaling(pipeline):
    config, fitter = pipeline
    rng = np.random.default_rng(3)
    y = rng.normal(0.0, 40.0, 60)
    ev = simulate_drifting_run(config, y, 2.0, seed=2)
    series = allan_curve(ev, [2.0, 4.0, 8.0, 20.0], config.motion, "linear_drift", fitter, n_resample=200)
    slope = np.polyfit(np.log(series.taus), np.log(series.sigmas), 1)[0]
    assert -0.8 < slope < -0.2
    for p in series.points:
        assert p.err_lo <= p.err_hi


def test_allan_curve_deterministic_and_skips(pipeline):
    config, fitter = pipeline
    ev = simulate_drifting_run(config, np.zeros(12), 10.0, seed=4)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        a = allan_curve(ev, [20.0, 30.0, 100.0], config.motion, "linear_drift", fitter, n_resample=100, seed=1)
    assert [p.tau_s for p in a.points] == [20.0, 30.0]
    assert any("100" in str(w.message) for w in caught)
    b = allan_curve(ev, [20.0, 30.0], config.motion, "linear_drift", fitter, n_resample=100, seed=1, workers=2)
    assert a.points == b.points


def test_sliding_deviations_flat_for_stationary_data(pipeline):
    config, fitter = pipeline
    ev = simulate_drifting_run(config, np.zeros(12), 10.0, seed=5)
    trace = sliding_deviations(ev, 30.0, 15.0, config.motion, "linear_drift", fitter)
    assert len(trace) == 7
    y = np.array([p.y_zs for p in trace])
    half = np.array([0.5 * (p.ci_hi - p.ci_lo) for p in trace])
    # overlapping windows are correlated; a loose 4-sigma band suffices
    assert np.all(np.abs(y) < 4 * half + 1e-9)
    csv_text = sliding_csv(trace)
    assert csv_text.splitlines()[0] == "t_s,y_zs,ci_lo,ci_hi"


def test_fitter_mismatch_rejected(pipeline):
    config, fitter = pipeline
    ev = uniform_events()
    with pytest.raises(InvalidArgument):
        allan_curve(ev, [60.0], config.motion, "step", fitter)
