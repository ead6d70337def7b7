"""Physical constants of the 14.4 keV 57Fe resonance and unit conversions.

Internally, times are measured in units of the natural lifetime 1/gamma and
frequencies (detunings, widths, thicknesses) in units of gamma.  Everything
user-facing takes nanoseconds and converts here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants as _sc

from .errors import InvalidArgument

_EV = _sc.electron_volt


@dataclass(frozen=True)
class PhysicalConstants:
    gamma_inverse_ns: float = 141.0
    hbar_gamma_neV: float = 4.7
    photon_energy_keV: float = 14.4

    @property
    def wavelength_m(self) -> float:
        """Resonant wavelength lambda0 = h c / E."""
        return _sc.h * _sc.c / (self.photon_energy_keV * 1e3 * _EV)

    @property
    def carrier_period_zs(self) -> float:
        """Carrier oscillation period T0 = lambda0 / c, in zeptoseconds."""
        return self.wavelength_m / _sc.c * 1e21

    @property
    def half_period_zs(self) -> float:
        # time shift equivalent to a pi phase error
        return 0.5 * self.carrier_period_zs

    @property
    def wavenumber_per_m(self) -> float:
        return 2.0 * _sc.pi / self.wavelength_m


CONSTANTS = PhysicalConstants()

# Detection window and bunch spacing of the experiment.
DETECTION_START_NS = 18.0
DETECTION_STOP_NS = 170.0
BUNCH_PERIOD_NS = 176.0


def ns_to_gamma(t_ns, constants: PhysicalConstants = CONSTANTS):
    """Convert nanoseconds to natural time units (1/gamma)."""
    return t_ns / constants.gamma_inverse_ns


def gamma_to_ns(t_gamma, constants: PhysicalConstants = CONSTANTS):
    return t_gamma * constants.gamma_inverse_ns


def doppler_detuning(velocity_mm_s, constants: PhysicalConstants = CONSTANTS):
    """Doppler shift E0 v / c of a resonance, in units of gamma.

    Positive velocity maps to positive detuning.  ``velocity_mm_s`` may be a
    scalar or an array.
    """
    v = np.asarray(velocity_mm_s, dtype=float)
    if np.any(np.abs(v) > 1000.0):
        raise InvalidArgument("Doppler velocity beyond 1 m/s")
    shift_eV = constants.photon_energy_keV * 1e3 * (v * 1e-3) / _sc.c
    out = shift_eV / (constants.hbar_gamma_neV * 1e-9)
    return float(out) if out.ndim == 0 else out


def detuning_to_velocity(delta_gamma, constants: PhysicalConstants = CONSTANTS):
    """Inverse of :func:`doppler_detuning`, in mm/s."""
    return delta_gamma / doppler_detuning(1.0, constants)
