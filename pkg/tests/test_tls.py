import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrsctl.absorber import relative_l2, thin_limit_response
from nrsctl.errors import InvalidArgument
from nrsctl.signal import SignalEnvelope, convolve, default_grid, impulse
from nrsctl.tls import (
    DipoleTrace,
    TlsParams,
    coherence_response,
    crossover_time,
    decay_kernel,
    intensity_difference_analytic,
    output_field,
    thin_double_pulse,
)


def test_impulse_drive_reproduces_thin_transmission(grid):
    b = 2.3
    out = output_field(impulse(grid), TlsParams(b))
    ref = thin_limit_response(b, grid)
    assert out.singular_weight == 1.0
    assert relative_l2(out.samples, ref.samples) < 1e-12


def test_coherence_of_impulse_is_exponential(grid):
    p = TlsParams(1.0)
    sigma = coherence_response(impulse(grid), p)
    expected = -0.5j * np.exp(-0.5 * p.gamma_tilde * grid.tau)
    np.testing.assert_allclose(sigma.values, expected, atol=1e-14)
    np.testing.assert_allclose(np.diff(sigma.phase[sigma.magnitude > 0]), 0.0, atol=1e-12)


def test_params():
    p = TlsParams(2.0)
    assert p.gamma_tilde == 3.0
    assert p.alpha == -4j
    with pytest.raises(InvalidArgument):
        TlsParams(-1.0)


@pytest.mark.parametrize("b", [0.3, 1.0, 2.3])
def test_crossover_is_one_over_b(b):
    assert crossover_time(b) == 141.0 / b


def test_crossover_needs_positive_b():
    with pytest.raises(InvalidArgument):
        crossover_time(0.0)
    with pytest.raises(InvalidArgument):
        intensity_difference_analytic(0.0, [1.0])


def test_crossover_example_thin():
    assert crossover_time(2.3) == pytest.approx(61.3, abs=0.05)


@pytest.mark.parametrize("b", [0.3, 1.0, 2.3])
def test_simulated_difference_matches_closed_form(b):
    g = default_grid(0.1, t_stop=1000.0)
    params = TlsParams(b)
    se = output_field(thin_double_pulse(b, g, -1.0), params)
    boost = output_field(thin_double_pulse(b, g, +1.0), params)
    diff = np.abs(boost.samples) ** 2 - np.abs(se.samples) ** 2
    exact = intensity_difference_analytic(b, g.times)
    assert np.max(np.abs(diff - exact)) < 1e-4 * np.max(np.abs(exact))
    k = np.nonzero((diff[:-1] < 0) & (diff[1:] >= 0))[0][0]
    assert abs(g.times[k] - 141.0 / b) <= g.dt


def test_dipole_phase_masked_where_magnitude_vanishes(grid):
    values = np.zeros(grid.n, dtype=complex)
    values[:10] = 1j
    trace = DipoleTrace(grid, values)
    assert np.isnan(trace.phase[20])
    assert trace.phase[0] == pytest.approx(np.pi / 2)


def test_dipole_csv_header(grid):
    trace = coherence_response(impulse(grid), TlsParams(1.0))
    lines = trace.to_csv().splitlines()
    assert lines[0] == "t_ns,re,im,magnitude,phase_rad"
    assert len(lines) == grid.n + 1


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), b=st.sampled_from([0.1, 0.5, 2.3, 5.0]))
def test_output_equals_convolution_with_thin_kernel(seed, b):
    rng = np.random.default_rng(seed)
    g = default_grid(0.5)
    # random smooth causal drive
    freqs = rng.uniform(-30, 30, 4)
    amps = rng.normal(size=4) + 1j * rng.normal(size=4)
    rate = rng.uniform(0.2, 3.0)
    drive = SignalEnvelope.from_function(
        g, lambda tau: np.exp(-rate * tau) * sum(a * np.exp(-1j * f * tau) for a, f in zip(amps, freqs)),
        singular_weight=rng.normal() + 1j * rng.normal(),
    )
    kernel = impulse(g) + thin_limit_response(b, g)
    ref = convolve(drive, kernel)
    out = output_field(drive, TlsParams(b))
    assert out.singular_weight == pytest.approx(ref.singular_weight)
    assert relative_l2(out.samples, ref.samples) < 1e-6


def test_decay_kernel_rate(grid):
    k = decay_kernel(grid, 4.0)
    np.testing.assert_allclose(k.samples.real, np.exp(-2.0 * grid.tau))
