"""Forward-transmission functions of resonant absorbers.

The time-domain transmission of a resonant foil is ``T(t) = s [delta(t) + R(t)]``
with ``s`` a constant non-resonant attenuation.  For a single unsplit line the
response ``R`` is known in closed form (Bessel J1).  Split lines are handled in
the frequency domain, where the foil multiplies the field by

    T(w) = s * exp( -sum_j b_j / (w_j/2 - i (w - delta_j)) )

with the Fourier convention ``F(w) = int f(t) exp(i w t) dt``.  All rates are
in units of gamma and times in 1/gamma.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft as sfft
from scipy.special import j1

from .constants import doppler_detuning  # noqa: F401  (re-exported)
from .errors import InvalidArgument, ResolutionError
from .signal import SignalEnvelope, TimeGrid

# Period (in 1/gamma times the narrowest width) of the FFT box; the response
# has decayed by exp(-30) at the wrap-around point.
_WRAP_DECAY = 60.0
_SMALL_ARG = 1e-3


@dataclass(frozen=True)
class NuclearLine:
    detuning: float = 0.0
    b: float = 1.0
    width: float = 1.0

    def __post_init__(self):
        if not self.b >= 0:
            raise InvalidArgument(f"thickness b must be >= 0, got {self.b}")
        if not self.width > 0:
            raise InvalidArgument(f"linewidth must be > 0, got {self.width}")


@dataclass(frozen=True)
class TransmissionModel:
    lines: tuple = field(default_factory=lambda: (NuclearLine(),))
    electronic_scale: float = 1.0

    def __post_init__(self):
        lines = tuple(self.lines)
        if not lines:
            raise InvalidArgument("a transmission model needs at least one line")
        if not 0.0 < self.electronic_scale <= 1.0:
            raise InvalidArgument("electronic_scale must lie in (0, 1]")
        object.__setattr__(self, "lines", lines)

    @classmethod
    def single(cls, b: float, detuning: float = 0.0, width: float = 1.0):
        return cls((NuclearLine(detuning, b, width),))

    @classmethod
    def split_pair(cls, b_total: float, splitting: float = 63.0):
        """Two equal lines at 0 and ``splitting``, sharing ``b_total``."""
        half = 0.5 * b_total
        return cls((NuclearLine(0.0, half), NuclearLine(splitting, half)))

    @property
    def total_b(self) -> float:
        return sum(line.b for line in self.lines)

    def shifted(self, delta: float) -> "TransmissionModel":
        lines = tuple(
            NuclearLine(line.detuning + delta, line.b, line.width) for line in self.lines
        )
        return TransmissionModel(lines, self.electronic_scale)

    def to_dict(self) -> dict:
        return {
            "lines": [
                {
                    "detuning_gamma": line.detuning,
                    "b_gamma": line.b,
                    "width_gamma": line.width,
                }
                for line in self.lines
            ],
            "electronic_scale": self.electronic_scale,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TransmissionModel":
        try:
            lines = tuple(
                NuclearLine(
                    float(item.get("detuning_gamma", 0.0)),
                    float(item["b_gamma"]),
                    float(item.get("width_gamma", 1.0)),
                )
                for item in data["lines"]
            )
        except (KeyError, TypeError) as exc:
            raise InvalidArgument(f"malformed transmission model: {exc}") from exc
        return cls(lines, float(data.get("electronic_scale", 1.0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "TransmissionModel":
        return cls.from_dict(json.loads(text))


def _check_b(b):
    if not b >= 0:
        raise InvalidArgument(f"thickness b must be >= 0, got {b}")


def bessel_response(b: float, tau: np.ndarray) -> np.ndarray:
    """``-sqrt(b/t) exp(-t/2) J1(2 sqrt(b t))`` at times ``tau >= 0`` (1/gamma)."""
    tau = np.asarray(tau, dtype=float)
    x = 2.0 * np.sqrt(b * tau)
    out = np.empty_like(tau)
    small = x < _SMALL_ARG
    # J1(x) ~ x/2 - x^3/16 gives sqrt(b/t) J1 -> b - b^2 t / 2
    out[small] = b - 0.5 * b * b * tau[small]
    big = ~small
    out[big] = np.sqrt(b / tau[big]) * j1(x[big])
    return -out * np.exp(-0.5 * tau)


def single_line_response(b: float, grid: TimeGrid) -> SignalEnvelope:
    """Scattered part R(t) of an unsplit line on resonance (no impulse)."""
    _check_b(b)
    return SignalEnvelope.from_function(grid, lambda tau: bessel_response(b, tau))


def thin_limit_response(b: float, grid: TimeGrid) -> SignalEnvelope:
    """Thin-target approximation ``-b exp(-(1 + b) t / 2)``."""
    _check_b(b)
    return SignalEnvelope.from_function(grid, lambda tau: -b * np.exp(-0.5 * (1.0 + b) * tau))


def _exponent(model: TransmissionModel, omega: np.ndarray) -> np.ndarray:
    g = np.zeros(np.shape(omega), dtype=complex)
    for line in model.lines:
        g -= line.b / (0.5 * line.width - 1j * (omega - line.detuning))
    return g


def transmission_spectrum(model: TransmissionModel, omega) -> np.ndarray:
    """Frequency-domain transmission ``T(w)`` at frequencies ``omega`` (gamma)."""
    omega = np.asarray(omega, dtype=float)
    return model.electronic_scale * np.exp(_exponent(model, omega))


def _exp_remainder(g: np.ndarray) -> np.ndarray:
    """``exp(g) - 1 - g - g^2/2`` without cancellation for small ``|g|``."""
    out = np.exp(g) - 1.0 - g - 0.5 * g * g
    small = np.abs(g) < 0.05
    gs = g[small]
    series = np.zeros_like(gs)
    term = gs * gs / 2.0
    for k in range(3, 10):
        term = term * gs / k
        series += term
    out[small] = series
    return out


def _pair_kernel(a: complex, c: complex, tau: np.ndarray) -> np.ndarray:
    """``int_0^t exp(-a s) exp(-c (t - s)) ds``."""
    diff = c - a
    if diff == 0:
        return tau * np.exp(-a * tau)
    return -np.exp(-a * tau) * np.expm1(-diff * tau) / diff


def multiline_transmission(model: TransmissionModel, grid: TimeGrid) -> SignalEnvelope:
    """Time-domain ``T(t)`` of a multi-line absorber.

    The first two orders of the exponential series have closed-form inverse
    transforms (single and double exponentials) and are added analytically;
    only the remainder, which falls off as ``w^-3``, goes through the FFT.
    """
    nyquist = np.pi / grid.dtau
    reach = max(abs(line.detuning) + 10.0 * line.width for line in model.lines)
    if reach >= nyquist:
        raise ResolutionError(
            f"grid resolves |w| < {nyquist:.1f} gamma, lines need {reach:.1f} gamma"
        )
    k0 = grid.zero_index
    tau = grid.tau[k0:]
    n = tau.size

    min_width = min(line.width for line in model.lines)
    n_fft = sfft.next_fast_len(max(4 * grid.n, int(np.ceil(_WRAP_DECAY / (min_width * grid.dtau)))))
    omega = 2.0 * np.pi * sfft.fftfreq(n_fft, grid.dtau)
    remainder = _exp_remainder(_exponent(model, omega))
    # inverse transform: f(t_k) = (1 / (N dtau)) sum_m F(w_m) exp(-i w_m t_k)
    smooth = sfft.fft(remainder)[:n] / (n_fft * grid.dtau)

    rates = [0.5 * line.width + 1j * line.detuning for line in model.lines]
    for line, a in zip(model.lines, rates):
        smooth -= line.b * np.exp(-a * tau)
    for line_j, a in zip(model.lines, rates):
        for line_k, c in zip(model.lines, rates):
            smooth += 0.5 * line_j.b * line_k.b * _pair_kernel(a, c, tau)

    samples = np.zeros(grid.n, dtype=complex)
    samples[k0:] = model.electronic_scale * smooth
    return SignalEnvelope(grid, model.electronic_scale, samples)


def response(model: TransmissionModel, grid: TimeGrid) -> SignalEnvelope:
    """The smooth part of :func:`multiline_transmission`, unscaled impulse removed."""
    return multiline_transmission(model, grid).smooth_part()


def relative_l2(a: Sequence[complex], b: Sequence[complex]) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
