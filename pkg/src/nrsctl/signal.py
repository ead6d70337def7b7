"""Uniform time grids and complex field envelopes with an exact impulse term.

A field such as ``T(t) = delta(t) + R(t)`` is stored as the coefficient of the
Dirac impulse (``singular_weight``) plus the smooth part sampled on a grid.
Convolutions and Fourier transforms treat the impulse symbolically.

Grid times are given in nanoseconds.  The integration measure used by
:func:`convolve` and :func:`to_frequency` is the natural time unit 1/gamma,
so response functions written with gamma = 1 can be combined directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .constants import CONSTANTS
from .errors import InvalidArgument

__all__ = [
    "TimeGrid",
    "SignalEnvelope",
    "FrequencySpectrum",
    "make_grid",
    "default_grid",
    "impulse",
    "convolve",
    "causal_convolve",
    "to_frequency",
    "from_frequency",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = t_start + k * dt`` (ns), ``k = 0 .. n-1``."""

    t_start: float
    dt: float
    n: int

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise InvalidArgument(f"dt must be positive, got {self.dt}")
        if int(self.n) != self.n or self.n < 2:
            raise InvalidArgument(f"n must be an integer >= 2, got {self.n}")

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n)

    @property
    def t_stop(self) -> float:
        return self.t_start + self.dt * (self.n - 1)

    @property
    def tau(self) -> np.ndarray:
        """Grid times in units of 1/gamma."""
        return self.times / CONSTANTS.gamma_inverse_ns

    @property
    def dtau(self) -> float:
        return self.dt / CONSTANTS.gamma_inverse_ns

    @property
    def zero_index(self) -> int:
        """Index of the sample at t = 0.

        Causal operations require t = 0 to lie on the grid.
        """
        k0 = -self.t_start / self.dt
        k = int(round(k0))
        if k < 0 or k >= self.n or abs(k - k0) > 1e-9:
            raise InvalidArgument("t = 0 is not a grid point")
        return k

    def covers(self, t_lo: float, t_hi: float) -> bool:
        return self.t_start <= t_lo and self.t_stop >= t_hi - 1e-9 * self.dt


def make_grid(t_start: float, dt: float, n: int) -> TimeGrid:
    return TimeGrid(float(t_start), float(dt), int(n))


def default_grid(dt: float = 0.1, t_stop: float = 176.0) -> TimeGrid:
    """Grid from 0 to ``t_stop`` ns (one bunch period by default)."""
    return make_grid(0.0, dt, int(round(t_stop / dt)) + 1)


@dataclass(frozen=True)
class SignalEnvelope:
    """Slowly varying complex field ``w * delta(t) + f(t)`` on a time grid."""

    grid: TimeGrid
    singular_weight: complex = 0.0
    samples: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        samples = self.samples
        if samples is None:
            samples = np.zeros(self.grid.n, dtype=complex)
        samples = np.array(samples, dtype=complex)
        if samples.shape != (self.grid.n,):
            raise InvalidArgument(
                f"samples have shape {samples.shape}, grid needs ({self.grid.n},)"
            )
        if not np.all(np.isfinite(samples)):
            raise InvalidArgument("envelope samples must be finite")
        w = complex(self.singular_weight)
        if not np.isfinite(w):
            raise InvalidArgument("singular weight must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "singular_weight", w)

    @classmethod
    def from_function(cls, grid: TimeGrid, func, singular_weight=0.0):
        """Sample ``func(tau)`` (tau in 1/gamma) for t >= 0, zero before."""
        tau = grid.tau
        values = np.zeros(grid.n, dtype=complex)
        mask = grid.times >= 0
        values[mask] = func(tau[mask])
        return cls(grid, singular_weight, values)

    def _check(self, other: "SignalEnvelope"):
        if self.grid != other.grid:
            raise InvalidArgument("envelopes live on different grids")

    def __add__(self, other):
        self._check(other)
        return SignalEnvelope(
            self.grid,
            self.singular_weight + other.singular_weight,
            self.samples + other.samples,
        )

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, c):
        c = complex(c)
        return SignalEnvelope(self.grid, c * self.singular_weight, c * self.samples)

    __rmul__ = __mul__

    def with_samples(self, samples) -> "SignalEnvelope":
        return SignalEnvelope(self.grid, self.singular_weight, samples)

    def is_causal(self) -> bool:
        return not np.any(self.samples[self.grid.times < 0])

    def smooth_part(self) -> "SignalEnvelope":
        return SignalEnvelope(self.grid, 0.0, self.samples)


def impulse(grid: TimeGrid, weight: complex = 1.0) -> SignalEnvelope:
    return SignalEnvelope(grid, weight, None)


def causal_convolve(f: np.ndarray, g: np.ndarray, dtau: float) -> np.ndarray:
    """Trapezoidal ``int_0^t f(s) g(t - s) ds`` for arrays sampled from t = 0.

    ``f`` and ``g`` broadcast against each other along all but the last axis;
    the last axis is time.  The full discrete convolution is computed by FFT
    and the endpoint terms are then halved.
    """
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    n = f.shape[-1]
    if g.shape[-1] != n:
        raise InvalidArgument("convolution operands differ in length")
    nfft = sfft.next_fast_len(2 * n - 1)
    full = sfft.ifft(sfft.fft(f, nfft) * sfft.fft(g, nfft), nfft)[..., :n]
    ends = 0.5 * (f[..., :1] * g + g[..., :1] * f)
    return (full - ends) * dtau


def convolve(a: SignalEnvelope, b: SignalEnvelope) -> SignalEnvelope:
    """``(a delta + f) * (b delta + g) = ab delta + a g + b f + f*g``."""
    a._check(b)
    grid = a.grid
    k0 = grid.zero_index
    if not (a.is_causal() and b.is_causal()):
        raise InvalidArgument("convolve requires causal envelopes")
    f = a.samples[k0:]
    g = b.samples[k0:]
    smooth = a.singular_weight * g + b.singular_weight * f
    smooth = smooth + causal_convolve(f, g, grid.dtau)
    out = np.zeros(grid.n, dtype=complex)
    out[k0:] = smooth
    return SignalEnvelope(grid, a.singular_weight * b.singular_weight, out)


@dataclass(frozen=True)
class FrequencySpectrum:
    """Spectrum ``F(w) = singular_weight + int f(t) exp(i w t) dt``.

    ``omega`` is in units of gamma, in FFT order.
    """

    grid: TimeGrid
    omega: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    singular_weight: complex = 0.0

    @property
    def n_fft(self) -> int:
        return self.values.shape[-1]


def to_frequency(env: SignalEnvelope, pad_factor: int = 4) -> FrequencySpectrum:
    if int(pad_factor) != pad_factor or pad_factor < 2:
        raise InvalidArgument("pad_factor must be an integer >= 2")
    grid = env.grid
    n_fft = int(pad_factor) * grid.n
    omega = 2.0 * np.pi * sfft.fftfreq(n_fft, grid.dtau)
    tau0 = grid.t_start / CONSTANTS.gamma_inverse_ns
    smooth = n_fft * sfft.ifft(env.samples, n_fft) * np.exp(1j * omega * tau0)
    values = env.singular_weight + grid.dtau * smooth
    return FrequencySpectrum(grid, omega, values, env.singular_weight)


def from_frequency(spec: FrequencySpectrum) -> SignalEnvelope:
    grid = spec.grid
    tau0 = grid.t_start / CONSTANTS.gamma_inverse_ns
    smooth = (spec.values - spec.singular_weight) * np.exp(-1j * spec.omega * tau0)
    samples = sfft.fft(smooth)[: grid.n] / (spec.n_fft * grid.dtau)
    return SignalEnvelope(grid, spec.singular_weight, samples)
