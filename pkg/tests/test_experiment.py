import json
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from nrsctl.absorber import TransmissionModel
from nrsctl.errors import InvalidArgument
from nrsctl.experiment import (
    EventList,
    ExperimentConfig,
    ForwardModel,
    ScanSchedule,
    Spectrum2D,
    bin_to_spectrum,
    centers_to_edges,
    dominant_period,
    expected_intensity,
    inject_dead_time,
    on_resonance_intensity,
    sample_events,
    simulate,
    simulated_crossover,
    spectrum_for_config,
)
from nrsctl.io import read_events, write_events
from nrsctl.pulse import canonical_motion


def test_default_config_values():
    c = ExperimentConfig()
    assert len(c.detunings) == 241
    assert c.detunings[0] == pytest.approx(-233.0, abs=0.5)
    assert c.window_ns == (18.0, 170.0)
    assert [line.b for line in c.scu.lines] == [5.0, 5.0]
    assert c.target.total_b == 2.3


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(window_ns=(18.0, 200.0)),
        dict(total_counts=0.0),
        dict(detunings=(1.0, 0.0)),
        dict(run_length_s=-1.0),
        dict(dt_ns=1.0, time_bin_ns=0.5),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(InvalidArgument):
        ExperimentConfig(**kwargs)


def test_config_json_roundtrip():
    c = ExperimentConfig.reduced(motion=canonical_motion("scaled", scale=0.01))
    back = ExperimentConfig.from_json(c.to_json())
    assert back == c


def test_config_from_partial_json():
    c = ExperimentConfig.from_dict({"motion": "enhanced_excitation", "n_detunings": 11})
    assert len(c.detunings) == 11
    assert c.motion == canonical_motion("enhanced_excitation")


def test_config_error_names_field():
    with pytest.raises(InvalidArgument, match="target"):
        ExperimentConfig.from_dict({"target": {"lines": [{"b_gamma": -2}]}})
    with pytest.raises(InvalidArgument, match="dt_ns"):
        ExperimentConfig.from_dict({"dt_ns": "fine"})


def test_centers_to_edges():
    np.testing.assert_allclose(centers_to_edges([0.0, 1.0, 3.0]), [-0.5, 0.5, 2.0, 4.0])


def test_intensity_nonnegative_and_shaped(small_config):
    lam = expected_intensity(small_config)
    assert lam.shape == (76, 9)
    assert np.all(lam >= 0)


def test_no_target_means_no_detuning_dependence(small_config):
    c = replace(small_config, target=TransmissionModel.single(0.0))
    lam = expected_intensity(c)
    np.testing.assert_allclose(lam, lam[:, :1] * np.ones((1, lam.shape[1])), rtol=1e-12)


def test_leading_amplitude_is_sum_of_thicknesses():
    c = ExperimentConfig.reduced(
        scu=TransmissionModel.single(5.0),
        motion=canonical_motion("stimulated_emission"),
        detunings=(0.0,),
    )
    fields = ForwardModel(c).output_fields(c.motion)
    assert fields[0, 0] == pytest.approx(-(5.0 + 2.3), rel=1e-8)


def test_binned_intensity_is_bin_average():
    c = ExperimentConfig.reduced(detunings=(0.0, 50.0))
    fm = ForwardModel(c)
    fine = fm.intensity_samples(c.motion)
    binned = fm.intensity()
    t = fm.grid.times
    sel = (t >= 18.0) & (t <= 19.0)
    ref = np.trapezoid(fine[sel, 0], t[sel]) / 1.0
    assert binned[0, 0] == pytest.approx(ref, rel=1e-12)


def test_batch_phases_match_single():
    c = ExperimentConfig.reduced(detunings=(-40.0, 0.0, 40.0))
    fm = ForwardModel(c)
    grid = fm.grid
    phases = np.stack([np.zeros(grid.n), 0.3 * grid.times / 170.0])
    batch = fm.intensity_from_phase(phases)
    for i in range(2):
        np.testing.assert_allclose(batch[i], fm.intensity_from_phase(phases[i]), rtol=1e-12)


def test_crossover_windows():
    c = ExperimentConfig(detunings=(0.0,))
    fm = ForwardModel(c)
    se = fm.intensity(canonical_motion("stimulated_emission"))[:, 0]
    boost = fm.intensity(canonical_motion("enhanced_excitation"))[:, 0]
    mid = 0.5 * (c.time_edges[1:] + c.time_edges[:-1])
    early = (mid >= 18) & (mid < 40)
    late = mid >= 55
    assert se[early].sum() > boost[early].sum()
    assert boost[late].sum() > se[late].sum()


def test_full_model_crossover_time():
    t = simulated_crossover(ExperimentConfig())
    assert 35.0 <= t <= 55.0


def test_quantum_beat_period():
    c = ExperimentConfig()
    t, i = on_resonance_intensity(c)
    period = dominant_period(t, i)
    expected = 2 * np.pi / 63.0 * 141.0
    # one bin of the unpadded transform
    tolerance = expected**2 / (t[-1] - t[0])
    assert abs(period - expected) < tolerance


def test_schedule_exposure_uniform():
    s = ScanSchedule(10, 2.0, 60.0)
    e = s.exposure()
    assert e.sum() == pytest.approx(60.0)
    np.testing.assert_allclose(e, 6.0)
    e2 = s.exposure((0.0, 30.0), dropouts=((10.0, 5.0),))
    assert e2.sum() == pytest.approx(25.0)


def test_schedule_lab_times_stay_in_channel():
    s = ScanSchedule(5, 1.0, 10.0)
    u = np.linspace(0, 1.999, 50)
    lab = s.lab_times(3, u)
    start, chan = s.slots()
    slot = np.floor(lab / s.dwell_s).astype(int)
    assert np.all(chan[slot] == 3)
    assert np.all(np.diff(lab) >= 0)


def test_zero_intensity_gives_no_events(small_config):
    lam = np.zeros((76, 9))
    ev = sample_events(lam, small_config, seed=1, normalization=1.0)
    assert len(ev) == 0


def test_sampling_is_deterministic(small_config):
    lam = expected_intensity(small_config)
    a = sample_events(lam, small_config, seed=7)
    b = sample_events(lam, small_config, seed=7)
    c = sample_events(lam, small_config, seed=8)
    for f in ("t", "delta", "lab_time"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    assert not np.array_equal(a.t, c.t)


def test_columns_sample_independently(small_config):
    lam = expected_intensity(small_config)
    lam2 = lam.copy()
    lam2[:, 4] *= 3.0
    a = sample_events(lam, small_config, seed=3, normalization=1e3)
    b = sample_events(lam2, small_config, seed=3, normalization=1e3)
    d = small_config.detunings[0]
    np.testing.assert_array_equal(a.t[a.delta == d], b.t[b.delta == d])


def test_events_inside_window(small_config):
    ev = simulate(small_config, 2)
    assert np.all((ev.t >= 18.0) & (ev.t < 170.0))
    assert np.all((ev.lab_time >= 0) & (ev.lab_time < small_config.run_length_s))
    assert set(np.unique(ev.delta)) <= set(small_config.detunings)
    assert np.all(np.diff(ev.lab_time) >= 0)


def test_poisson_dispersion():
    c = ExperimentConfig(
        dt_ns=0.5, time_bin_ns=1.0, detunings=tuple(np.linspace(-50, 50, 80)),
        total_counts=2_000_000, run_length_s=100.0,
    )
    lam = np.ones((152, 80))
    ev = sample_events(lam, c, seed=11)
    counts = spectrum_for_config(ev, c).counts
    assert counts.size >= 10_000
    ratio = counts.var(ddof=1) / counts.mean()
    assert 0.9 <= ratio <= 1.1
    # chi-square dispersion test at the 0.1 % level
    chi2 = np.sum((counts - counts.mean()) ** 2) / counts.mean()
    p = stats.chi2.sf(chi2, counts.size - 1)
    assert 1e-3 < p < 1 - 1e-3


def test_total_counts_match_budget(small_config):
    ev = simulate(small_config, 5)
    assert abs(len(ev) - small_config.total_counts) < 5 * np.sqrt(small_config.total_counts)


def test_dead_time_identity_and_full(small_config):
    ev = simulate(small_config, 4)
    same = inject_dead_time(ev, [])
    np.testing.assert_array_equal(same.t, ev.t)
    none = inject_dead_time(ev, [(0.0, small_config.run_length_s)])
    assert len(none) == 0
    assert none.live_time == pytest.approx(0.0)


def test_dead_time_removes_expected_fraction():
    c = ExperimentConfig(
        dt_ns=0.5, time_bin_ns=1.0, detunings=(0.0, 10.0), total_counts=400_000, run_length_s=600.0,
    )
    ev = sample_events(np.ones((152, 2)), c, seed=9)
    cut = inject_dead_time(ev, [(200.0, 30.0)])
    frac = 1 - len(cut) / len(ev)
    assert abs(frac - 0.05) < 4 * np.sqrt(0.05 * 0.95 / len(ev))
    assert cut.channel_exposure().sum() == pytest.approx(570.0)


def test_overlapping_dropouts_rejected(small_config):
    ev = simulate(small_config, 4)
    with pytest.raises(InvalidArgument):
        inject_dead_time(ev, [(10.0, 10.0), (15.0, 5.0)])
    once = inject_dead_time(ev, [(10.0, 5.0)])
    with pytest.raises(InvalidArgument):
        inject_dead_time(once, [(12.0, 1.0)])


def test_binning_conserves_counts(small_config):
    ev = simulate(small_config, 6)
    sp = spectrum_for_config(ev, small_config)
    assert sp.total == len(ev)
    assert sp.exposure.sum() == pytest.approx(small_config.run_length_s)


def test_binning_empty_and_single():
    te = np.array([18.0, 20.0, 22.0])
    de = np.array([-1.0, 0.0, 1.0])
    empty = EventList(np.zeros(0), np.zeros(0), np.zeros(0), window=(0.0, 1.0))
    assert bin_to_spectrum(empty, te, de).counts.sum() == 0
    one = EventList(np.array([21.0]), np.array([-0.5]), np.array([0.2]), window=(0.0, 1.0))
    sp = bin_to_spectrum(one, te, de)
    assert sp.counts[1, 0] == 1 and sp.counts.sum() == 1


def test_spectrum_validation():
    with pytest.raises(InvalidArgument):
        Spectrum2D([0.0, 1.0], [0.0, 1.0], np.array([[-1]]), [1.0])
    with pytest.raises(InvalidArgument):
        Spectrum2D([1.0, 0.0], [0.0, 1.0], np.array([[1]]), [1.0])


def test_spectrum_json_roundtrip(small_config):
    sp = spectrum_for_config(simulate(small_config, 1), small_config)
    back = Spectrum2D.from_dict(json.loads(json.dumps(sp.to_dict())))
    np.testing.assert_array_equal(back.counts, sp.counts)
    np.testing.assert_array_equal(back.time_edges, sp.time_edges)


def test_event_file_roundtrip(tmp_path, small_config):
    ev = inject_dead_time(simulate(small_config, 1), [(5.0, 2.0)])
    path = tmp_path / "events.csv"
    write_events(path, ev, small_config)
    back, config = read_events(path)
    np.testing.assert_array_equal(back.t, ev.t)
    np.testing.assert_array_equal(back.lab_time, ev.lab_time)
    assert back.dropouts == ev.dropouts
    assert config == small_config
    header = [l for l in path.read_text().splitlines() if not l.startswith("#")][0]
    assert header == "t_ns,delta_gamma,lab_time_s"


def test_select_and_iterate(small_config):
    ev = simulate(small_config, 1)
    part = ev.select(10.0, 20.0)
    assert part.window == (10.0, 20.0)
    assert np.all((part.lab_time >= 10.0) & (part.lab_time < 20.0))
    first = next(iter(part))
    assert first.lab_time == part.lab_time[0]


def test_event_list_validation():
    with pytest.raises(InvalidArgument):
        EventList(np.zeros(2), np.zeros(3), np.zeros(2))
    with pytest.raises(InvalidArgument):
        EventList(np.array([np.nan]), np.zeros(1), np.zeros(1))
