"""Forward model of the time- and detuning-resolved forward-scattering experiment.

The moving absorber shapes each synchrotron pulse into a double pulse which
then passes the target foil.  A Doppler drive detunes the target by ``delta``;
shifting all target lines by ``delta`` multiplies its response by
``exp(-i delta t)``, so one stationary target response serves every detuning
column.  Detected photons are Poisson distributed around the resulting
intensity map and carry a lab timestamp given by the drive's sweep schedule.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np
from scipy import fft as sfft
from scipy.signal import savgol_filter

from .absorber import TransmissionModel, multiline_transmission
from .constants import (
    BUNCH_PERIOD_NS,
    DETECTION_START_NS,
    DETECTION_STOP_NS,
    doppler_detuning,
    gamma_to_ns,
)
from .errors import InvalidArgument
from .pulse import MotionProfile, canonical_motion, phase_from_motion
from .signal import default_grid

SCHEMA_VERSION = 1
DEFAULT_PHOTON_BUDGET = 10_000_000
SCAN_EDGE_MM_S = 22.8


def default_detunings(n: int = 241, edge_mm_s: float = SCAN_EDGE_MM_S) -> np.ndarray:
    """Detuning channels (gamma) of a symmetric Doppler scan."""
    return doppler_detuning(np.linspace(-edge_mm_s, edge_mm_s, n))


def default_scu() -> TransmissionModel:
    # both driven lines carry b = 5 gamma
    return TransmissionModel.split_pair(10.0, 63.0)


def default_target() -> TransmissionModel:
    return TransmissionModel.single(2.3)


@dataclass(frozen=True)
class ExperimentConfig:
    scu: TransmissionModel = field(default_factory=default_scu)
    target: TransmissionModel = field(default_factory=default_target)
    motion: MotionProfile = field(
        default_factory=lambda: canonical_motion("stimulated_emission")
    )
    detunings: tuple = field(default_factory=lambda: tuple(default_detunings()))
    window_ns: tuple = (DETECTION_START_NS, DETECTION_STOP_NS)
    dt_ns: float = 0.1
    time_bin_ns: float = 0.5
    total_counts: float = DEFAULT_PHOTON_BUDGET
    run_length_s: float = 600.0
    sweep_period_s: float = 2.0
    bunch_period_ns: float = BUNCH_PERIOD_NS

    def __post_init__(self):
        det = tuple(float(d) for d in self.detunings)
        object.__setattr__(self, "detunings", det)
        object.__setattr__(self, "window_ns", tuple(float(w) for w in self.window_ns))
        lo, hi = self.window_ns
        if not 0 <= lo < hi <= self.bunch_period_ns:
            raise InvalidArgument(f"window_ns {self.window_ns} outside the bunch period")
        if len(det) < 1 or np.any(np.diff(det) <= 0):
            raise InvalidArgument("detunings must be strictly increasing")
        if not self.total_counts > 0:
            raise InvalidArgument("total_counts must be positive")
        if not (self.run_length_s > 0 and self.sweep_period_s > 0):
            raise InvalidArgument("run_length_s and sweep_period_s must be positive")
        if not (self.dt_ns > 0 and self.time_bin_ns >= self.dt_ns):
            raise InvalidArgument("need 0 < dt_ns <= time_bin_ns")

    @classmethod
    def reduced(cls, **overrides) -> "ExperimentConfig":
        """Coarser grid (0.5 ns, 61 detuning channels) for desk-scale fitting."""
        base = dict(dt_ns=0.5, time_bin_ns=1.0, detunings=tuple(default_detunings(61)))
        base.update(overrides)
        return cls(**base)

    def with_motion(self, motion: MotionProfile) -> "ExperimentConfig":
        return replace(self, motion=motion)

    @property
    def grid(self):
        return default_grid(self.dt_ns, self.bunch_period_ns)

    @property
    def time_edges(self) -> np.ndarray:
        lo, hi = self.window_ns
        n = int(round((hi - lo) / self.time_bin_ns))
        return lo + self.time_bin_ns * np.arange(n + 1)

    @property
    def detuning_edges(self) -> np.ndarray:
        return centers_to_edges(np.asarray(self.detunings))

    def schedule(self) -> "ScanSchedule":
        return ScanSchedule(len(self.detunings), self.sweep_period_s, self.run_length_s)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scu": self.scu.to_dict(),
            "target": self.target.to_dict(),
            "motion": self.motion.to_dict(),
            "detunings_gamma": list(self.detunings),
            "window_ns": list(self.window_ns),
            "dt_ns": self.dt_ns,
            "time_bin_ns": self.time_bin_ns,
            "total_counts": self.total_counts,
            "run_length_s": self.run_length_s,
            "sweep_period_s": self.sweep_period_s,
            "bunch_period_ns": self.bunch_period_ns,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        """Build a config from JSON data; missing keys take their defaults."""
        kwargs = {}
        simple = {
            "window_ns": tuple,
            "dt_ns": float,
            "time_bin_ns": float,
            "total_counts": float,
            "run_length_s": float,
            "sweep_period_s": float,
            "bunch_period_ns": float,
        }
        for key, conv in simple.items():
            if key in data:
                try:
                    kwargs[key] = conv(data[key])
                except (TypeError, ValueError) as exc:
                    raise InvalidArgument(f"config field {key!r}: {exc}") from exc
        if "scu" in data:
            kwargs["scu"] = _field("scu", TransmissionModel.from_dict, data["scu"])
        if "target" in data:
            kwargs["target"] = _field("target", TransmissionModel.from_dict, data["target"])
        if "motion" in data:
            kwargs["motion"] = _field("motion", _motion_from_json, data["motion"])
        if "detunings_gamma" in data:
            kwargs["detunings"] = _field(
                "detunings_gamma", lambda v: tuple(float(x) for x in v), data["detunings_gamma"]
            )
        elif "n_detunings" in data:
            kwargs["detunings"] = tuple(default_detunings(int(data["n_detunings"])))
        try:
            return cls(**kwargs)
        except InvalidArgument as exc:
            raise InvalidArgument(f"config: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


def _motion_from_json(value):
    if isinstance(value, str):
        return canonical_motion(value)
    return MotionProfile.from_dict(value)


def _field(name, parse, value):
    try:
        return parse(value)
    except (InvalidArgument, KeyError, TypeError, ValueError) as exc:
        raise InvalidArgument(f"config field {name!r}: {exc}") from exc


def centers_to_edges(centers: np.ndarray) -> np.ndarray:
    centers = np.asarray(centers, dtype=float)
    if centers.size == 1:
        return np.array([centers[0] - 0.5, centers[0] + 0.5])
    mid = 0.5 * (centers[1:] + centers[:-1])
    first = centers[0] - (mid[0] - centers[0])
    last = centers[-1] + (centers[-1] - mid[-1])
    return np.concatenate([[first], mid, [last]])


# --- forward model ---------------------------------------------------------

class ForwardModel:
    """Cached intensity map ``lambda(t, delta)`` for varying absorber motions.

    Everything that does not depend on the motion (absorber transmissions,
    FFTs of the detuned target responses) is computed once.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        grid = config.grid
        self.grid = grid
        if not grid.covers(*config.window_ns):
            raise InvalidArgument("time grid does not cover the detection window")
        self.scu_transmission = multiline_transmission(config.scu, grid)
        target = multiline_transmission(config.target, grid)
        self.target_scale = target.singular_weight
        tau = grid.tau
        det = np.asarray(config.detunings)
        # detuned target responses, one row per channel, impulse removed
        self._columns = (target.samples / self.target_scale)[None, :] * np.exp(
            -1j * det[:, None] * tau[None, :]
        )
        self._nfft = sfft.next_fast_len(2 * grid.n - 1)
        self._columns_ft = sfft.fft(self._columns, self._nfft, axis=-1)
        self._edges = config.time_edges

    @property
    def n_detunings(self) -> int:
        return self._columns.shape[0]

    def output_fields(self, motion: MotionProfile) -> np.ndarray:
        """Smooth part of the field behind the target, shape (n_delta, n_t)."""
        phase = phase_from_motion(motion, self.grid)
        return self.fields_from_phase(phase)

    def fields_from_phase(self, phase: np.ndarray) -> np.ndarray:
        """Fields for one phase trace (n_t,) or a batch (..., n_t).

        The result has shape (..., n_delta, n_t).
        """
        scu = self.scu_transmission
        f = scu.samples * np.exp(1j * np.asarray(phase))
        f = f[..., None, :]
        w = scu.singular_weight
        n = self.grid.n
        full = sfft.ifft(sfft.fft(f, self._nfft, axis=-1) * self._columns_ft, axis=-1)[..., :n]
        ends = 0.5 * (f[..., :1] * self._columns + self._columns[:, :1] * f)
        conv = (full - ends) * self.grid.dtau
        return self.target_scale * (f + w * self._columns + conv)

    def intensity_samples(self, motion: MotionProfile) -> np.ndarray:
        """``|E_out|^2`` on the time grid, shape (n_t, n_delta)."""
        return (np.abs(self.output_fields(motion)) ** 2).T

    def _bin_along_last(self, samples: np.ndarray) -> np.ndarray:
        # cumulative trapezoid integral, linearly interpolated at the bin edges
        dt = self.grid.dt
        steps = 0.5 * (samples[..., 1:] + samples[..., :-1]) * dt
        cum = np.concatenate([np.zeros(samples.shape[:-1] + (1,)), np.cumsum(steps, axis=-1)], axis=-1)
        k, frac = self._edge_index
        at_edges = cum[..., k] * (1.0 - frac) + cum[..., k + 1] * frac
        return np.diff(at_edges, axis=-1) / np.diff(self._edges)

    @property
    def _edge_index(self):
        pos = (self._edges - self.grid.t_start) / self.grid.dt
        k = np.clip(np.floor(pos + 1e-9).astype(int), 0, self.grid.n - 2)
        return k, pos - k

    def bin_average(self, samples: np.ndarray) -> np.ndarray:
        """Average grid samples (first axis time) over the detector time bins."""
        return np.moveaxis(self._bin_along_last(np.moveaxis(samples, 0, -1)), -1, 0)

    def intensity(self, motion: Optional[MotionProfile] = None) -> np.ndarray:
        """Bin-averaged intensity, shape (n_time_bins, n_delta)."""
        motion = self.config.motion if motion is None else motion
        return self.intensity_from_phase(phase_from_motion(motion, self.grid))

    def intensity_from_phase(self, phase: np.ndarray) -> np.ndarray:
        """Binned intensity for phase traces; shape (..., n_time_bins, n_delta)."""
        fields = self.fields_from_phase(phase)
        binned = self._bin_along_last(np.abs(fields) ** 2)
        return np.swapaxes(binned, -1, -2)


def expected_intensity(config: ExperimentConfig) -> np.ndarray:
    """Intensity map for ``config.motion``; rows are time bins, columns detunings."""
    return ForwardModel(config).intensity()


def on_resonance_intensity(config: ExperimentConfig, motion=None, delta: float = 0.0):
    """``(t_ns, I(t))`` on the fine grid inside the window at one detuning."""
    single = replace(config, detunings=(float(delta),))
    model = ForwardModel(single)
    motion = config.motion if motion is None else motion
    samples = model.intensity_samples(motion)[:, 0]
    t = model.grid.times
    lo, hi = config.window_ns
    keep = (t >= lo - 1e-9) & (t <= hi + 1e-9)
    return t[keep], samples[keep]


def dominant_period(t_ns: np.ndarray, values: np.ndarray, trend_window_ns: float = 30.0) -> float:
    """Period (ns) of the strongest oscillation after removing the slow trend.

    The trend is a quadratic Savitzky-Golay smooth over ``trend_window_ns``;
    the residual is Hann-windowed and zero-padded 64-fold before the FFT.
    """
    dt = float(t_ns[1] - t_ns[0])
    win = int(round(trend_window_ns / dt)) | 1
    resid = values - savgol_filter(values, win, 2)
    n = 64 * resid.size
    spec = np.abs(np.fft.rfft(resid * np.hanning(resid.size), n))
    freq = np.fft.rfftfreq(n, dt)
    k = 1 + int(np.argmax(spec[1:]))
    return float(1.0 / freq[k])


def simulated_crossover(config: ExperimentConfig, first=None, second=None) -> Optional[float]:
    """First time (ns) in the window where the beat-averaged ``I_second - I_first``
    turns positive.

    Defaults compare stimulated emission (first) with enhanced excitation
    (second) on resonance.  The quantum beat of the split absorber is averaged
    out with a moving mean over one beat period ``2 pi / S``.
    """
    first = canonical_motion("stimulated_emission") if first is None else first
    second = canonical_motion("enhanced_excitation") if second is None else second
    t, i1 = on_resonance_intensity(config, first)
    _, i2 = on_resonance_intensity(config, second)
    diff = i2 - i1
    lines = sorted(line.detuning for line in config.scu.lines)
    if len(lines) > 1:
        splitting = lines[-1] - lines[0]
        period_ns = gamma_to_ns(2 * np.pi / splitting)
        k = max(1, int(round(period_ns / config.dt_ns)))
        pad = np.pad(diff, (k // 2, k - 1 - k // 2), mode="edge")
        diff = np.convolve(pad, np.ones(k) / k, mode="valid")
    up = np.nonzero((diff[:-1] < 0) & (diff[1:] >= 0))[0]
    if up.size == 0:
        return None
    i = up[0]
    # linear interpolation of the zero
    return float(t[i] - diff[i] * (t[i + 1] - t[i]) / (diff[i + 1] - diff[i]))


# --- scan schedule and photon events ----------------------------------------

@dataclass(frozen=True)
class ScanSchedule:
    """Triangular Doppler sweep: channels 0..n-1 and back, equal dwell each."""

    n_channels: int
    sweep_period_s: float
    run_length_s: float

    @property
    def dwell_s(self) -> float:
        return self.sweep_period_s / (2 * self.n_channels)

    def slots(self):
        """Start times and channel indices of all dwell slots in the run."""
        n_slots = int(np.ceil(self.run_length_s / self.dwell_s - 1e-9))
        s = np.arange(n_slots)
        p = s % (2 * self.n_channels)
        channel = np.where(p < self.n_channels, p, 2 * self.n_channels - 1 - p)
        return s * self.dwell_s, channel

    def _live_segments(self, window, dropouts):
        """Per-slot live intervals (start, stop, channel) inside ``window``."""
        start, channel = self.slots()
        stop = np.minimum(start + self.dwell_s, self.run_length_s)
        lo, hi = window
        a = np.maximum(start, lo)
        b = np.minimum(stop, hi)
        keep = b > a
        a, b, channel = a[keep], b[keep], channel[keep]
        segs_a, segs_b, segs_c = [a], [b], [channel]
        for d0, dlen in dropouts:
            d1 = d0 + dlen
            na, nb, nc = [], [], []
            for aa, bb, cc in zip(segs_a, segs_b, segs_c):
                # split each interval around the dropout
                left_b = np.minimum(bb, d0)
                right_a = np.maximum(aa, d1)
                m1 = left_b > aa
                m2 = bb > right_a
                na += [aa[m1], right_a[m2]]
                nb += [left_b[m1], bb[m2]]
                nc += [cc[m1], cc[m2]]
            segs_a, segs_b, segs_c = na, nb, nc
        return np.concatenate(segs_a), np.concatenate(segs_b), np.concatenate(segs_c)

    def exposure(self, window=None, dropouts=()) -> np.ndarray:
        """Live seconds per channel inside ``window`` excluding dropouts."""
        window = (0.0, self.run_length_s) if window is None else window
        a, b, c = self._live_segments(window, dropouts)
        return np.bincount(c, weights=b - a, minlength=self.n_channels)

    def lab_times(self, channel: int, u: np.ndarray, window=None, dropouts=()) -> np.ndarray:
        """Map channel-local live time ``u`` (s) to lab time."""
        return self.lab_time_map(window, dropouts)(channel, u)

    def lab_time_map(self, window=None, dropouts=()):
        """Reusable ``(channel, u) -> lab time`` for a fixed window."""
        window = (0.0, self.run_length_s) if window is None else window
        a, b, c = self._live_segments(window, dropouts)
        order = np.lexsort((a, c))
        a, b, c = a[order], b[order], c[order]
        bounds = np.searchsorted(c, np.arange(self.n_channels + 1))

        def mapping(channel: int, u: np.ndarray) -> np.ndarray:
            aa = a[bounds[channel]:bounds[channel + 1]]
            bb = b[bounds[channel]:bounds[channel + 1]]
            if aa.size == 0:
                raise InvalidArgument(f"channel {channel} has no live time in the window")
            cum = np.concatenate([[0.0], np.cumsum(bb - aa)])
            k = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, aa.size - 1)
            return aa[k] + (u - cum[k])

        return mapping

    def to_dict(self) -> dict:
        return {
            "n_channels": self.n_channels,
            "sweep_period_s": self.sweep_period_s,
            "run_length_s": self.run_length_s,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScanSchedule":
        return cls(int(data["n_channels"]), float(data["sweep_period_s"]), float(data["run_length_s"]))


class PhotonEvent(NamedTuple):
    t: float
    delta: float
    lab_time: float


@dataclass(frozen=True)
class EventList:
    """Detected photons as parallel arrays, sorted by lab time.

    ``window`` is the lab-time span the list covers and ``dropouts`` the dead
    intervals inside it; together with the sweep ``schedule`` they determine
    the live exposure of every detuning channel.
    """

    t: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)
    lab_time: np.ndarray = field(repr=False)
    detunings: tuple = ()
    schedule: Optional[ScanSchedule] = None
    window: tuple = (0.0, 0.0)
    dropouts: tuple = ()

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=float) for a in (self.t, self.delta, self.lab_time)]
        if not (arrays[0].shape == arrays[1].shape == arrays[2].shape):
            raise InvalidArgument("event arrays differ in length")
        for name, arr in zip(("t", "delta", "lab_time"), arrays):
            if not np.all(np.isfinite(arr)):
                raise InvalidArgument(f"non-finite event field {name}")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "detunings", tuple(float(d) for d in self.detunings))
        object.__setattr__(self, "dropouts", tuple(tuple(map(float, d)) for d in self.dropouts))
        object.__setattr__(self, "window", tuple(map(float, self.window)))

    def __len__(self) -> int:
        return self.t.size

    def __iter__(self) -> Iterator[PhotonEvent]:
        for row in zip(self.t, self.delta, self.lab_time):
            yield PhotonEvent(*map(float, row))

    @property
    def duration(self) -> float:
        return self.window[1] - self.window[0]

    @property
    def live_time(self) -> float:
        lo, hi = self.window
        dead = sum(max(0.0, min(hi, a + d) - max(lo, a)) for a, d in self.dropouts)
        return self.duration - dead

    def select(self, lo: float, hi: float) -> "EventList":
        """Events with ``lo <= lab_time < hi``; the window shrinks accordingly."""
        i0, i1 = np.searchsorted(self.lab_time, [lo, hi], side="left")
        return self._slice(i0, i1, (max(lo, self.window[0]), min(hi, self.window[1])))

    def _slice(self, i0, i1, window) -> "EventList":
        return replace(
            self,
            t=self.t[i0:i1],
            delta=self.delta[i0:i1],
            lab_time=self.lab_time[i0:i1],
            window=window,
        )

    def channel_exposure(self) -> np.ndarray:
        """Live seconds per detuning channel over this list's window."""
        if self.schedule is None:
            n = max(len(self.detunings), 1)
            return np.full(n, self.live_time / n)
        return self.schedule.exposure(self.window, self.dropouts)

    def metadata(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "detunings_gamma": list(self.detunings),
            "schedule": None if self.schedule is None else self.schedule.to_dict(),
            "window_s": list(self.window),
            "dropouts": [list(d) for d in self.dropouts],
        }


def concatenate_events(parts: Sequence[EventList]) -> EventList:
    parts = list(parts)
    if not parts:
        raise InvalidArgument("nothing to concatenate")
    t = np.concatenate([p.t for p in parts])
    d = np.concatenate([p.delta for p in parts])
    lab = np.concatenate([p.lab_time for p in parts])
    order = np.argsort(lab, kind="stable")
    window = (min(p.window[0] for p in parts), max(p.window[1] for p in parts))
    dropouts = tuple(sorted({dr for p in parts for dr in p.dropouts}))
    return replace(parts[0], t=t[order], delta=d[order], lab_time=lab[order], window=window, dropouts=dropouts)


def count_normalization(intensity: np.ndarray, config: ExperimentConfig) -> float:
    """Counts per unit intensity per live second giving ``config.total_counts``."""
    exposure = config.schedule().exposure()
    denom = float(np.sum(intensity * exposure[None, :]))
    return config.total_counts / denom if denom > 0 else 0.0


def sample_events(
    intensity: np.ndarray,
    config: ExperimentConfig,
    seed: int,
    *,
    lab_window=None,
    normalization: Optional[float] = None,
) -> EventList:
    """Draw Poisson photon events from a binned intensity map.

    Each detuning channel uses its own child of ``SeedSequence(seed)``, so the
    result does not depend on the order in which channels are processed.
    ``normalization`` (counts per unit intensity per second) defaults to the
    value that yields ``config.total_counts`` over the full run.
    """
    lam = np.asarray(intensity, dtype=float)
    if not np.all(np.isfinite(lam)):
        raise InvalidArgument("intensity map must be finite")
    edges = config.time_edges
    det = np.asarray(config.detunings)
    if lam.shape != (edges.size - 1, det.size):
        raise InvalidArgument(f"intensity shape {lam.shape} does not match config bins")
    schedule = config.schedule()
    window = (0.0, config.run_length_s) if lab_window is None else tuple(lab_window)
    norm = count_normalization(lam, config) if normalization is None else normalization
    exposure = schedule.exposure(window)
    to_lab = schedule.lab_time_map(window)
    children = np.random.SeedSequence(seed).spawn(det.size)

    ts, ds, labs = [], [], []
    for j, child in enumerate(children):
        rng = np.random.default_rng(child)
        mean = norm * np.clip(lam[:, j], 0.0, None) * exposure[j]
        counts = rng.poisson(mean)
        total = int(counts.sum())
        if total == 0:
            continue
        lo = np.repeat(edges[:-1], counts)
        width = np.repeat(np.diff(edges), counts)
        ts.append(lo + width * rng.random(total))
        ds.append(np.full(total, det[j]))
        u = rng.random(total) * exposure[j]
        labs.append(to_lab(j, u))
    if ts:
        t = np.concatenate(ts)
        d = np.concatenate(ds)
        lab = np.concatenate(labs)
        order = np.argsort(lab, kind="stable")
        t, d, lab = t[order], d[order], lab[order]
    else:
        t = d = lab = np.zeros(0)
    return EventList(t, d, lab, tuple(det), schedule, window, ())


def inject_dead_time(events: EventList, dropouts) -> EventList:
    """Remove events recorded during ``dropouts = [(start_s, duration_s), ...]``."""
    intervals = sorted((float(a), float(d)) for a, d in dropouts)
    for a, d in intervals:
        if d < 0:
            raise InvalidArgument("negative dropout duration")
    combined = sorted(set(intervals) | set(events.dropouts))
    for (a0, d0), (a1, _) in zip(combined[:-1], combined[1:]):
        if a0 + d0 > a1:
            raise InvalidArgument("dropout intervals overlap")
    keep = np.ones(len(events), dtype=bool)
    for a, d in intervals:
        keep &= ~((events.lab_time >= a) & (events.lab_time < a + d))
    return replace(
        events,
        t=events.t[keep],
        delta=events.delta[keep],
        lab_time=events.lab_time[keep],
        dropouts=tuple(combined),
    )


@dataclass(frozen=True)
class Spectrum2D:
    """Binned counts, rows are time bins and columns detuning bins."""

    time_edges: np.ndarray = field(repr=False)
    detuning_edges: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    exposure: np.ndarray = field(repr=False)

    def __post_init__(self):
        te = np.asarray(self.time_edges, dtype=float)
        de = np.asarray(self.detuning_edges, dtype=float)
        if np.any(np.diff(te) <= 0) or np.any(np.diff(de) <= 0):
            raise InvalidArgument("bin edges must be strictly increasing")
        counts = np.asarray(self.counts)
        if counts.shape != (te.size - 1, de.size - 1):
            raise InvalidArgument("count matrix does not match bin edges")
        if np.any(counts < 0):
            raise InvalidArgument("negative counts")
        object.__setattr__(self, "time_edges", te)
        object.__setattr__(self, "detuning_edges", de)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "exposure", np.asarray(self.exposure, dtype=float))

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "time_edges_ns": self.time_edges.tolist(),
            "detuning_edges_gamma": self.detuning_edges.tolist(),
            "shape": list(self.counts.shape),
            "counts": self.counts.ravel().tolist(),
            "exposure_s": self.exposure.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Spectrum2D":
        shape = tuple(data["shape"])
        counts = np.asarray(data["counts"]).reshape(shape)
        return cls(data["time_edges_ns"], data["detuning_edges_gamma"], counts, data["exposure_s"])


def bin_to_spectrum(events: EventList, time_edges, detuning_edges) -> Spectrum2D:
    time_edges = np.asarray(time_edges, dtype=float)
    detuning_edges = np.asarray(detuning_edges, dtype=float)
    counts, _, _ = np.histogram2d(events.t, events.delta, bins=(time_edges, detuning_edges))
    counts = counts.astype(np.int64)
    n_det = detuning_edges.size - 1
    exposure = np.zeros(n_det)
    if events.detunings:
        chan = np.asarray(events.detunings)
        per_channel = events.channel_exposure()
        j = np.searchsorted(detuning_edges, chan, side="right") - 1
        ok = (j >= 0) & (j < n_det)
        np.add.at(exposure, j[ok], per_channel[ok])
    else:
        exposure[:] = events.live_time / n_det
    return Spectrum2D(time_edges, detuning_edges, counts, exposure)


def spectrum_for_config(events: EventList, config: ExperimentConfig) -> Spectrum2D:
    return bin_to_spectrum(events, config.time_edges, config.detuning_edges)


def simulate(config: ExperimentConfig, seed: int) -> EventList:
    """Forward model plus Poisson sampling for ``config.motion``."""
    return sample_events(expected_intensity(config), config, seed)
