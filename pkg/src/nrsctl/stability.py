"""Allan-deviation analysis of per-interval temporal deviations.

The event stream is cut into samples, each sample is fitted with a
single-parameter noise model around the nominal motion, and the resulting
deviations ``y_i`` (zeptoseconds) are fed into the two-sample variance.
"""

from __future__ import annotations

import csv
import io
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .errors import InsufficientStatistics, InvalidArgument
from .experiment import (
    EventList,
    ExperimentConfig,
    ForwardModel,
    concatenate_events,
    count_normalization,
    sample_events,
    spectrum_for_config,
)
from .pulse import MotionProfile
from .reconstruction import NoiseFit, NoiseFitter, noise_motion, zs_to_parameter

BINNING_MODES = ("equal_time", "equal_counts")
THREADS_ENV = "NRSCTL_THREADS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def bin_events(events: EventList, tau: float, mode: str = "equal_time") -> List[EventList]:
    """Split a run into consecutive non-overlapping samples.

    ``equal_time`` cuts the lab-time axis into ``[k tau, (k+1) tau)`` from the
    start of the run.  ``equal_counts`` takes ``ceil(rate * tau)`` consecutive
    events per sample with ``rate`` the run-averaged count rate.  A trailing
    partial sample is dropped in both modes.
    """
    if not tau > 0:
        raise InvalidArgument("tau must be positive")
    if mode not in BINNING_MODES:
        raise InvalidArgument(f"unknown binning mode {mode!r}; choose from {BINNING_MODES}")
    if np.any(np.diff(events.lab_time) < 0):
        raise InvalidArgument("events must be sorted by lab time")
    start, stop = events.window
    if mode == "equal_time":
        n = int(math.floor((stop - start) / tau + 1e-9))
        samples = [events.select(start + k * tau, start + (k + 1) * tau) for k in range(n)]
    else:
        rate = len(events) / (stop - start) if stop > start else 0.0
        quota = int(math.ceil(rate * tau))
        n = len(events) // quota if quota > 0 else 0
        samples = []
        lab = events.lab_time
        for k in range(n):
            i0, i1 = k * quota, (k + 1) * quota
            lo = start if k == 0 else lab[i0]
            hi = lab[i1] if i1 < len(events) else stop
            samples.append(events._slice(i0, i1, (lo, hi)))
    if len(samples) < 2:
        raise InvalidArgument(
            f"tau = {tau} s yields {len(samples)} sample(s); the Allan deviation needs at least 2"
        )
    return samples


def allan_deviation(y: Sequence[float]) -> float:
    """``sqrt( sum (y_{i+1} - y_i)^2 / (2 (N - 1)) )``."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise InvalidArgument("the Allan deviation needs at least two values")
    d = np.diff(y)
    return float(np.sqrt(np.sum(d * d) / (2.0 * (y.size - 1))))


class AllanPoint(NamedTuple):
    tau_s: float
    sigma_y_zs: float
    err_lo: float
    err_hi: float
    n_samples: int


@dataclass(frozen=True)
class AllanSeries:
    """Allan deviation versus sampling time.

    ``err_lo`` and ``err_hi`` are the 16th and 84th percentiles of the
    deviation under resampling of the per-sample fits.
    """

    points: tuple
    mode: str = "equal_time"
    model: str = "linear_drift"

    def __post_init__(self):
        pts = tuple(AllanPoint(*p) for p in self.points)
        taus = [p.tau_s for p in pts]
        if any(b <= a for a, b in zip(taus[:-1], taus[1:])):
            raise InvalidArgument("tau values must be strictly increasing")
        if any(p.sigma_y_zs < 0 or p.n_samples < 2 for p in pts):
            raise InvalidArgument("sigma must be >= 0 and n_samples >= 2")
        object.__setattr__(self, "points", pts)

    @property
    def taus(self) -> np.ndarray:
        return np.array([p.tau_s for p in self.points])

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([p.sigma_y_zs for p in self.points])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tau_s", "sigma_zs", "err_lo", "err_hi", "n"])
        for p in self.points:
            w.writerow([repr(p.tau_s), repr(p.sigma_y_zs), repr(p.err_lo), repr(p.err_hi), p.n_samples])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, mode: str = "equal_time", model: str = "linear_drift") -> "AllanSeries":
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        pts = [AllanPoint(float(a), float(b), float(c), float(d), int(e)) for a, b, c, d, e in rows[1:]]
        return cls(tuple(pts), mode, model)


def default_taus(events: EventList, per_decade: int = 10, min_counts: int = 100) -> np.ndarray:
    """Log-spaced ladder from 4x the minimum-statistics time up to half the run."""
    duration = events.duration
    rate = len(events) / duration if duration > 0 else 0.0
    if rate <= 0:
        raise InsufficientStatistics(len(events), min_counts)
    # never more than 256 samples per tau, which keeps the fit count bounded
    lo = max(4.0 * min_counts / rate, duration / 256.0)
    hi = duration / 2.0
    if lo >= hi:
        raise InvalidArgument("run too short for an Allan ladder")
    k = np.arange(math.floor(per_decade * math.log10(lo)), math.ceil(per_decade * math.log10(hi)) + 1)
    taus = 10.0 ** (k / per_decade)
    return taus[(taus >= lo * (1 - 1e-9)) & (taus <= hi * (1 + 1e-9))]


def _fit_samples(samples, fitter: NoiseFitter, workers: int):
    config = fitter.config

    def one(sample):
        try:
            return fitter.fit(spectrum_for_config(sample, config))
        except InsufficientStatistics:
            return None

    if workers > 1 and len(samples) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, samples))
    return [one(s) for s in samples]


def _ci_sigma(fit: NoiseFit) -> float:
    lo, hi = fit.y_ci_zs
    return 0.5 * abs(hi - lo)


def allan_curve(
    events: EventList,
    taus: Optional[Sequence[float]],
    base: MotionProfile,
    model: str = "linear_drift",
    fit_context=None,
    *,
    mode: str = "equal_time",
    n_resample: int = 1000,
    seed: int = 0,
    workers: Optional[int] = None,
) -> AllanSeries:
    """Allan deviation of fitted temporal deviations for each ``tau``.

    ``fit_context`` is a :class:`NoiseFitter` or an :class:`ExperimentConfig`
    (the reduced grid is used when omitted).  Samples with too few counts are
    left out; ``tau`` values that leave fewer than two fitted samples are
    skipped with a warning.
    """
    fitter = _as_fitter(fit_context, base, model)
    workers = default_workers() if workers is None else max(1, int(workers))
    taus = default_taus(events) if taus is None else np.asarray(sorted(set(float(t) for t in taus)))
    rng = np.random.default_rng(seed)
    points = []
    for tau in taus:
        try:
            samples = bin_events(events, tau, mode)
        except InvalidArgument as exc:
            warnings.warn(f"skipping tau = {tau:g} s: {exc}", stacklevel=2)
            continue
        fits = _fit_samples(samples, fitter, workers)
        kept = [f for f in fits if f is not None]
        if len(kept) < len(fits):
            warnings.warn(
                f"tau = {tau:g} s: {len(fits) - len(kept)} sample(s) below the count threshold left out",
                stacklevel=2,
            )
        if len(kept) < 2:
            warnings.warn(f"skipping tau = {tau:g} s: fewer than two usable samples", stacklevel=2)
            continue
        y = np.array([f.y_zs for f in kept])
        s = np.array([_ci_sigma(f) for f in kept])
        sigma = allan_deviation(y)
        draws = y[None, :] + s[None, :] * rng.normal(size=(n_resample, y.size))
        d = np.diff(draws, axis=1)
        boot = np.sqrt(np.sum(d * d, axis=1) / (2.0 * (y.size - 1)))
        lo, hi = np.percentile(boot, [16, 84])
        points.append(AllanPoint(float(tau), sigma, float(lo), float(hi), int(y.size)))
    return AllanSeries(tuple(points), mode, model)


class SlidingPoint(NamedTuple):
    t_center_s: float
    y_zs: float
    ci_lo: float
    ci_hi: float


def sliding_windows(events: EventList, tau: float, stride: float) -> List[EventList]:
    if not (tau > 0 and stride > 0):
        raise InvalidArgument("tau and stride must be positive")
    start, stop = events.window
    n = int(math.floor((stop - start - tau) / stride + 1e-9)) + 1
    return [events.select(start + k * stride, start + k * stride + tau) for k in range(max(n, 0))]


def sliding_deviations(
    events: EventList,
    tau: float,
    stride: float,
    base: MotionProfile,
    model: str = "linear_drift",
    fit_context=None,
    *,
    workers: Optional[int] = None,
) -> List[SlidingPoint]:
    """Deviation ``y`` in windows ``[k stride, k stride + tau)`` across the run."""
    fitter = _as_fitter(fit_context, base, model)
    workers = default_workers() if workers is None else max(1, int(workers))
    windows = sliding_windows(events, tau, stride)
    fits = _fit_samples(windows, fitter, workers)
    out = []
    for win, fit in zip(windows, fits):
        if fit is None:
            warnings.warn(f"window at {win.window[0]:g} s has too few counts", stacklevel=2)
            continue
        center = 0.5 * (win.window[0] + win.window[1])
        out.append(SlidingPoint(center, fit.y_zs, *sorted(fit.y_ci_zs)))
    return out


def sliding_csv(points: Sequence[SlidingPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_s", "y_zs", "ci_lo", "ci_hi"])
    for p in points:
        w.writerow([repr(float(v)) for v in p])
    return buf.getvalue()


def _as_fitter(fit_context, base, model) -> NoiseFitter:
    if isinstance(fit_context, NoiseFitter):
        if fit_context.model_kind != model or fit_context.base != base:
            raise InvalidArgument("fit context was built for a different base motion or model")
        return fit_context
    config = ExperimentConfig.reduced() if fit_context is None else fit_context
    if not isinstance(config, ExperimentConfig):
        raise InvalidArgument("fit_context must be a NoiseFitter or ExperimentConfig")
    return NoiseFitter(config, base, model)


def simulate_drifting_run(
    config: ExperimentConfig,
    y_zs: Sequence[float],
    segment_s: float,
    seed: int,
    model: str = "linear_drift",
    base: Optional[MotionProfile] = None,
) -> EventList:
    """Run whose motion carries deviation ``y_zs[i]`` during segment ``i``.

    Segment ``i`` covers lab time ``[i segment_s, (i+1) segment_s)``.  All
    segments share one count normalization, so a segment's count share only
    depends on its live time and motion.
    """
    base = config.motion if base is None else base
    y = np.asarray(y_zs, dtype=float)
    if not segment_s > 0:
        raise InvalidArgument("segment_s must be positive")
    if y.size * segment_s < config.run_length_s - 1e-9:
        raise InvalidArgument("segments do not cover the run")
    forward = ForwardModel(config)
    norm = count_normalization(forward.intensity(base), config)
    children = np.random.SeedSequence(seed).spawn(y.size)
    parts = []
    for i, (yi, child) in enumerate(zip(y, children)):
        lo = i * segment_s
        hi = min((i + 1) * segment_s, config.run_length_s)
        if hi <= lo:
            break
        motion = noise_motion(base, model, float(zs_to_parameter(model, yi)))
        lam = forward.intensity(motion)
        seg_seed = int(child.generate_state(1)[0])
        parts.append(sample_events(lam, config, seg_seed, lab_window=(lo, hi), normalization=norm))
    return concatenate_events(parts)
