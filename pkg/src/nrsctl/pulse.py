"""Double-pulse generation by a moving resonant absorber.

The absorber's prompt transmission forms the excitation pulse; its delayed
re-emission forms the control pulse.  A displacement ``x(t)`` of the absorber
(measured in resonant wavelengths) imprints the phase ``2 pi [x(t) - x(0)]``
on the control pulse only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .absorber import TransmissionModel, multiline_transmission
from .constants import BUNCH_PERIOD_NS, CONSTANTS, DETECTION_STOP_NS
from .errors import InvalidArgument
from .signal import SignalEnvelope, TimeGrid

KINDS = ("step", "step_plus_drift", "scaled_base", "stepped_base", "drifted_base", "free_knots")

DEFAULT_RISE_TIME_NS = 15.0
# ramp runs from t = 0 to t = rise_time, so the full phase is reached at the
# end of the movement
DEFAULT_RISE_CENTER_NS = 7.5
DEFAULT_N_KNOTS = 32

SCHEMA_VERSION = 1


def raised_cosine_ramp(t, center: float, rise_time: float) -> np.ndarray:
    """Smooth 0 -> 1 transition of duration ``rise_time`` centred at ``center``."""
    t = np.asarray(t, dtype=float)
    u = np.clip((t - (center - 0.5 * rise_time)) / rise_time, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * u))


def knot_times(n_knots: int = DEFAULT_N_KNOTS, t_stop: float = BUNCH_PERIOD_NS) -> np.ndarray:
    return np.linspace(0.0, t_stop, n_knots)


def knot_displacement(knot_t, knot_x, t) -> np.ndarray:
    """Monotone-cubic (PCHIP) interpolation, held constant outside the knots."""
    t = np.clip(np.asarray(t, dtype=float), knot_t[0], knot_t[-1])
    return PchipInterpolator(knot_t, knot_x)(t)


@dataclass(frozen=True)
class MotionProfile:
    """Absorber displacement ``x(t)`` in units of the resonant wavelength.

    Parameters by kind:

    - ``step``: ``amplitude`` reached through a raised-cosine ramp
      (``rise_time``, ``rise_center``, ns)
    - ``step_plus_drift``: step plus ``drift * t`` (wavelengths per ns)
    - ``scaled_base``: ``(1 + scale) * base(t)``
    - ``stepped_base``: ``base(t)`` plus a jump of ``step_phase`` radians just
      after t = 0
    - ``drifted_base``: ``base(t) + drift * t``
    - ``free_knots``: PCHIP through ``knots = ((t_ns, x), ...)``
    """

    kind: str = "step"
    amplitude: float = 0.0
    rise_time: float = DEFAULT_RISE_TIME_NS
    rise_center: float = DEFAULT_RISE_CENTER_NS
    drift: float = 0.0
    scale: float = 0.0
    step_phase: float = 0.0
    knots: tuple = ()
    base: Optional["MotionProfile"] = None
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown motion kind {self.kind!r}")
        if not self.rise_time > 0:
            raise InvalidArgument("rise_time must be positive")
        knots = tuple((float(t), float(x)) for t, x in self.knots)
        object.__setattr__(self, "knots", knots)
        if self.kind == "free_knots":
            if len(knots) < 2:
                raise InvalidArgument("free_knots motion needs at least two knots")
            kt = np.array([k[0] for k in knots])
            if np.any(np.diff(kt) <= 0):
                raise InvalidArgument("knot times must be strictly increasing")
        if self.kind.endswith("_base") and self.base is None:
            raise InvalidArgument(f"{self.kind} motion needs a base profile")

    @classmethod
    def from_knots(cls, knot_t, knot_x) -> "MotionProfile":
        return cls(kind="free_knots", knots=tuple(zip(knot_t, knot_x)))

    @property
    def knot_arrays(self):
        kt = np.array([k[0] for k in self.knots])
        kx = np.array([k[1] for k in self.knots])
        return kt, kx

    def displacement(self, t_ns) -> np.ndarray:
        return self._core(np.asarray(t_ns, dtype=float)) + self.offset

    def _core(self, t: np.ndarray) -> np.ndarray:
        kind = self.kind
        if kind == "step":
            return self.amplitude * raised_cosine_ramp(t, self.rise_center, self.rise_time)
        if kind == "step_plus_drift":
            ramp = raised_cosine_ramp(t, self.rise_center, self.rise_time)
            return self.amplitude * ramp + self.drift * t
        if kind == "scaled_base":
            return (1.0 + self.scale) * self.base.displacement(t)
        if kind == "stepped_base":
            jump = np.where(t > 0, self.step_phase / (2.0 * np.pi), 0.0)
            return self.base.displacement(t) + jump
        if kind == "drifted_base":
            return self.base.displacement(t) + self.drift * t
        kt, kx = self.knot_arrays
        return knot_displacement(kt, kx, t)

    def shifted(self, c: float) -> "MotionProfile":
        """Same motion displaced by the constant ``c``."""
        return replace(self, offset=self.offset + c)

    def to_dict(self) -> dict:
        params = {
            "amplitude": self.amplitude,
            "rise_time_ns": self.rise_time,
            "rise_center_ns": self.rise_center,
            "drift_per_ns": self.drift,
            "scale": self.scale,
            "step_phase_rad": self.step_phase,
            "offset": self.offset,
        }
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "params": params,
            "knots": [list(k) for k in self.knots],
            "base": None if self.base is None else self.base.to_dict(),
            "wavelength_m": CONSTANTS.wavelength_m,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MotionProfile":
        try:
            params = data.get("params", {})
            base = data.get("base")
            return cls(
                kind=data["kind"],
                amplitude=float(params.get("amplitude", 0.0)),
                rise_time=float(params.get("rise_time_ns", DEFAULT_RISE_TIME_NS)),
                rise_center=float(params.get("rise_center_ns", DEFAULT_RISE_CENTER_NS)),
                drift=float(params.get("drift_per_ns", 0.0)),
                scale=float(params.get("scale", 0.0)),
                step_phase=float(params.get("step_phase_rad", 0.0)),
                knots=tuple(tuple(k) for k in data.get("knots", [])),
                base=None if base is None else cls.from_dict(base),
                offset=float(params.get("offset", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgument(f"malformed motion profile: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MotionProfile":
        return cls.from_dict(json.loads(text))


def phase_from_motion(motion: MotionProfile, grid: TimeGrid) -> np.ndarray:
    """Translational phase ``2 pi [x(t) - x(0)]`` (radians) on the grid."""
    # the constant offset cancels exactly; leave it out so the phase is
    # bit-identical for displaced copies of a motion
    x = motion._core(grid.times)
    x0 = motion._core(np.zeros(1))[0]
    return 2.0 * np.pi * (x - x0)


@dataclass(frozen=True)
class DoublePulse:
    """Excitation impulse plus phase-controlled control pulse."""

    field: SignalEnvelope

    def __post_init__(self):
        if self.field.singular_weight == 0:
            raise InvalidArgument("double pulse lacks the excitation impulse")

    @property
    def excitation(self) -> complex:
        return self.field.singular_weight

    @property
    def control(self) -> np.ndarray:
        return self.field.samples


def apply_phase(transmission: SignalEnvelope, phase: np.ndarray) -> DoublePulse:
    """Multiply the delayed part of a stationary transmission by ``exp(i phase)``."""
    return DoublePulse(transmission.with_samples(transmission.samples * np.exp(1j * phase)))


def shape_double_pulse(
    scu: TransmissionModel, motion: MotionProfile, grid: TimeGrid
) -> DoublePulse:
    transmission = multiline_transmission(scu, grid)
    return apply_phase(transmission, phase_from_motion(motion, grid))


# --- canonical motions -----------------------------------------------------

CASES = (
    "stimulated_emission",
    "enhanced_excitation",
    "opposite_step",
    "with_drift",
    "scaled",
    "stepped",
)


def canonical_motion(
    case: str,
    *,
    drift: float = 0.0,
    scale: float = 0.0,
    step_phase: float = 0.0,
    rise_time: float = DEFAULT_RISE_TIME_NS,
    rise_center: float = DEFAULT_RISE_CENTER_NS,
) -> MotionProfile:
    """Named motion profiles used throughout the analysis.

    ``with_drift``, ``scaled`` and ``stepped`` perturb the half-wavelength
    step of ``enhanced_excitation`` by ``drift`` (wavelengths/ns), ``scale``
    or ``step_phase`` (radians).
    """
    step = dict(rise_time=rise_time, rise_center=rise_center)
    if case == "stimulated_emission":
        return MotionProfile("step", amplitude=0.0, **step)
    if case == "enhanced_excitation":
        return MotionProfile("step", amplitude=0.5, **step)
    if case == "opposite_step":
        return MotionProfile("step", amplitude=-0.5, **step)
    boost = MotionProfile("step", amplitude=0.5, **step)
    if case == "with_drift":
        return MotionProfile("step_plus_drift", amplitude=0.5, drift=drift, **step)
    if case == "scaled":
        return MotionProfile("scaled_base", scale=scale, base=boost)
    if case == "stepped":
        return MotionProfile("stepped_base", step_phase=step_phase, base=boost)
    raise InvalidArgument(f"unknown motion case {case!r}")


# --- temporal deviations ---------------------------------------------------

def drift_to_zs(drift, t2_ns: float = DETECTION_STOP_NS):
    """Temporal deviation ``y = A t2 / c`` (zs) of a drift ``A`` (wavelengths/ns)."""
    return drift * t2_ns * CONSTANTS.carrier_period_zs


def zs_to_drift(y_zs, t2_ns: float = DETECTION_STOP_NS):
    return y_zs / (t2_ns * CONSTANTS.carrier_period_zs)


def scale_to_zs(s):
    return s * CONSTANTS.half_period_zs


def step_phase_to_zs(d):
    return d / np.pi * CONSTANTS.half_period_zs
