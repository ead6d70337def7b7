"""Weakly driven two-level model of a thin resonant target.

In the linear regime only the coherence ``sigma_ge`` matters; it is the drive
convolved with a decaying exponential,

    sigma_ge(t) = -(i/2) Omega(t) * [theta(t) exp(-gamma_tilde t / 2)],

and the forward field is ``E_in + alpha d sigma_ge``.  With
``alpha = -2 i b`` (hbar = d = 1) and ``gamma_tilde = 1 + b`` this reproduces
the thin-sample transmission ``delta(t) - b exp(-(1 + b) t / 2)`` exactly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .constants import CONSTANTS, ns_to_gamma
from .errors import InvalidArgument
from .signal import SignalEnvelope, TimeGrid, convolve

# below this fraction of the peak magnitude the phase is reported as undefined
PHASE_MASK_FRACTION = 1e-6


@dataclass(frozen=True)
class TlsParams:
    b: float
    gamma: float = 1.0

    def __post_init__(self):
        if not self.b >= 0:
            raise InvalidArgument("thickness b must be >= 0")
        if not self.gamma > 0:
            raise InvalidArgument("gamma must be positive")

    @property
    def gamma_tilde(self) -> float:
        return self.gamma + self.b

    @property
    def alpha(self) -> complex:
        return -2j * self.b


@dataclass(frozen=True)
class DipoleTrace:
    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def phase(self) -> np.ndarray:
        """Unwrapped phase; NaN where the magnitude is negligibly small."""
        mag = self.magnitude
        peak = mag.max() if mag.size else 0.0
        valid = mag > PHASE_MASK_FRACTION * peak if peak > 0 else np.zeros_like(mag, bool)
        out = np.full(mag.shape, np.nan)
        if valid.any():
            out[valid] = np.unwrap(np.angle(self.values[valid]))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t_ns", "re", "im", "magnitude", "phase_rad"])
        for t, v, m, p in zip(self.grid.times, self.values, self.magnitude, self.phase):
            writer.writerow([f"{t:.6g}", repr(float(v.real)), repr(float(v.imag)), repr(float(m)), repr(float(p))])
        return buf.getvalue()


def decay_kernel(grid: TimeGrid, rate: float) -> SignalEnvelope:
    """``theta(t) exp(-rate t / 2)`` with ``rate`` in units of gamma."""
    return SignalEnvelope.from_function(grid, lambda tau: np.exp(-0.5 * rate * tau))


def coherence_response(drive: SignalEnvelope, params: TlsParams) -> DipoleTrace:
    """Coherence ``sigma_ge(t)`` for a drive ``Omega(t)`` given as an envelope."""
    kernel = decay_kernel(drive.grid, params.gamma_tilde)
    out = convolve(drive, kernel)
    return DipoleTrace(drive.grid, -0.5j * out.samples)


def output_field(drive: SignalEnvelope, params: TlsParams) -> SignalEnvelope:
    """Forward field: the drive plus ``alpha`` times the induced dipole."""
    sigma = coherence_response(drive, params)
    return drive + SignalEnvelope(drive.grid, 0.0, params.alpha * sigma.values)


def crossover_time(b: float) -> float:
    """Time (ns) after which the boosted intensity exceeds the stimulated one."""
    if not b > 0:
        raise InvalidArgument("crossover needs b > 0")
    return CONSTANTS.gamma_inverse_ns / b


def intensity_difference_analytic(b: float, t_ns) -> np.ndarray:
    """``|E_boost|^2 - |E_SE|^2 = 4 b^2 exp(-(1 + b) t) (b t - 1)`` (gamma units)."""
    if not b > 0:
        raise InvalidArgument("b must be positive")
    t = ns_to_gamma(np.asarray(t_ns, dtype=float))
    return 4.0 * b * b * np.exp(-(1.0 + b) * t) * (b * t - 1.0)


def thin_double_pulse(b: float, grid: TimeGrid, sign: float) -> SignalEnvelope:
    """``delta(t) + sign * b exp(-(1 + b) t / 2)``; sign -1 is SE, +1 is boost."""
    return SignalEnvelope.from_function(
        grid, lambda tau: sign * b * np.exp(-0.5 * (1.0 + b) * tau), singular_weight=1.0
    )
