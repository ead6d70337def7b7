"""Poisson maximum-likelihood reconstruction of absorber motions.

Every comparison uses the whole time/detuning count matrix at once.  The global
count normalization is a nuisance parameter and is profiled out in closed form.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .absorber import TransmissionModel, multiline_transmission
from .errors import InsufficientStatistics, InvalidArgument
from .experiment import ExperimentConfig, ForwardModel, Spectrum2D
from .pulse import (
    MotionProfile,
    knot_displacement,
    knot_times,
    phase_from_motion,
    drift_to_zs,
    scale_to_zs,
    step_phase_to_zs,
    zs_to_drift,
)
from .constants import CONSTANTS
from .signal import impulse
from .tls import DipoleTrace, TlsParams, coherence_response

MIN_COUNTS = 100
SCHEMA_VERSION = 1
NOISE_MODELS = ("linear_drift", "scaling", "step")


def _counts_of(observed) -> np.ndarray:
    if isinstance(observed, Spectrum2D):
        return np.asarray(observed.counts, dtype=float)
    return np.asarray(observed, dtype=float)


def poisson_log_likelihood(observed, expected, scale: float) -> float:
    """``sum n ln(s lambda) - s lambda`` over all cells.

    Cells with ``lambda = 0`` but counts present make the model impossible
    and give ``-inf``.
    """
    n = _counts_of(observed)
    lam = np.asarray(expected, dtype=float)
    if n.shape != lam.shape:
        raise InvalidArgument(f"shape mismatch: counts {n.shape}, expected {lam.shape}")
    if not scale > 0:
        raise InvalidArgument("scale must be positive")
    if np.any(lam < 0):
        raise InvalidArgument("expected values must be >= 0")
    mu = scale * lam
    if np.any((mu == 0) & (n > 0)):
        return -math.inf
    hit = n > 0
    return float(np.sum(n[hit] * np.log(mu[hit])) - mu.sum())


def fit_scale(observed, expected) -> float:
    """Closed-form Poisson MLE of a global scale, ``sum n / sum lambda``."""
    n = _counts_of(observed)
    total = float(np.sum(expected))
    if not total > 0:
        raise InvalidArgument("expected matrix sums to zero")
    return float(n.sum()) / total


def _relative_loglik(n: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Scale-profiled log-likelihood minus its saturated value.

    ``mu`` may carry leading batch axes.  Writing the sum relative to the
    saturated model keeps it well conditioned at large count totals.
    """
    axes = tuple(range(-n.ndim, 0))
    s = n.sum() / mu.sum(axis=axes, keepdims=True)
    m = s * mu
    hit = n > 0
    with np.errstate(divide="ignore"):
        log_ratio = np.where(hit, np.log(np.where(hit, m, 1.0)) - np.log(np.where(hit, n, 1.0)), 0.0)
    terms = n * log_ratio - (m - n)
    out = terms.sum(axis=axes)
    impossible = np.any((m == 0) & hit, axis=axes)
    return np.where(impossible, -np.inf, out)


class LikelihoodContext:
    """Observed spectrum plus cached forward model; evaluates candidate motions."""

    def __init__(self, observed: Spectrum2D, config: ExperimentConfig, model: Optional[ForwardModel] = None):
        if observed.total <= 0:
            raise InvalidArgument("observed spectrum is empty")
        self.observed = observed
        self.config = config
        self.model = ForwardModel(config) if model is None else model
        self.counts = np.asarray(observed.counts, dtype=float)
        expected_shape = (config.time_edges.size - 1, len(config.detunings))
        if self.counts.shape != expected_shape:
            raise InvalidArgument(
                f"spectrum shape {self.counts.shape} does not match the config bins {expected_shape}"
            )
        exposure = np.asarray(observed.exposure, dtype=float)
        self.exposure = exposure if exposure.sum() > 0 else np.ones(expected_shape[1])
        # precomputed saturated part so absolute likelihoods are cheap
        hit = self.counts > 0
        self._saturated = float(np.sum(self.counts[hit] * np.log(self.counts[hit])) - self.counts.sum())

    def expected(self, phase: np.ndarray) -> np.ndarray:
        return self.model.intensity_from_phase(phase) * self.exposure

    def relative(self, phase: np.ndarray) -> np.ndarray:
        return _relative_loglik(self.counts, self.expected(phase))

    def absolute(self, relative) -> np.ndarray:
        return relative + self._saturated

    def phase_of(self, motion: MotionProfile) -> np.ndarray:
        return phase_from_motion(motion, self.model.grid)

    def log_likelihood(self, motion: MotionProfile) -> float:
        lam = self.expected(self.phase_of(motion))
        return poisson_log_likelihood(self.counts, lam, fit_scale(self.counts, lam))


# --- evolutionary motion fit ----------------------------------------------

@dataclass(frozen=True)
class EAParams:
    population: int = 64
    elite_fraction: float = 0.25
    generations: int = 200
    n_knots: int = 32
    initial_sigma: float = 0.05
    initial_spread: float = 0.5
    step_mutation_rate: float = 0.3
    wrap_mutation_rate: float = 0.1
    patience: int = 40
    ftol: float = 0.05
    restarts: int = 4
    restart_generations: int = 150

    def __post_init__(self):
        if self.population < 4 or self.generations < 1 or self.n_knots < 3:
            raise InvalidArgument("population >= 4, generations >= 1, n_knots >= 3 required")
        if self.restarts < 1 or self.restart_generations < 0:
            raise InvalidArgument("restarts >= 1 and restart_generations >= 0 required")
        if not 0 < self.elite_fraction < 1:
            raise InvalidArgument("elite_fraction must lie in (0, 1)")

    @property
    def n_elite(self) -> int:
        return max(2, int(round(self.elite_fraction * self.population)))


@dataclass(frozen=True)
class FitResult:
    motion: MotionProfile
    scale_factor: float
    log_likelihood: float
    generations: int
    converged: bool
    trace: tuple = field(default=(), repr=False)
    population_spread: float = 0.0
    seed: Optional[int] = None

    def terminal_phase(self, t_ns: float = 170.0) -> float:
        kt, kx = self.motion.knot_arrays
        x = knot_displacement(kt, kx, np.array([0.0, t_ns]))
        return float(2 * np.pi * (x[1] - x[0]))

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["generation", "best_loglik"])
        for g, value in enumerate(self.trace):
            w.writerow([g, repr(float(value))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "motion": self.motion.to_dict(),
            "scale_factor": self.scale_factor,
            "log_likelihood": self.log_likelihood,
            "generations": self.generations,
            "converged": self.converged,
            "population_spread": self.population_spread,
            "seed": self.seed,
            "trace": [float(v) for v in self.trace],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FitResult":
        try:
            return cls(
                motion=MotionProfile.from_dict(data["motion"]),
                scale_factor=float(data["scale_factor"]),
                log_likelihood=float(data["log_likelihood"]),
                generations=int(data["generations"]),
                converged=bool(data["converged"]),
                trace=tuple(data.get("trace", ())),
                population_spread=float(data.get("population_spread", 0.0)),
                seed=data.get("seed"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidArgument(f"malformed fit result: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        return cls.from_dict(json.loads(text))


def _roughness(x: np.ndarray) -> np.ndarray:
    return np.sum(np.diff(x, n=2, axis=-1) ** 2, axis=-1)


def _rank(loglik: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Best first; equal likelihoods go to the smoother motion."""
    return np.lexsort((_roughness(x), -loglik))


def fit_motion_evolutionary(
    observed: Spectrum2D,
    config: ExperimentConfig,
    ea_params: Optional[EAParams] = None,
    seed: int = 0,
    *,
    context: Optional[LikelihoodContext] = None,
    callback=None,
) -> FitResult:
    """Model-free reconstruction of the absorber motion.

    The motion is a PCHIP curve through ``n_knots`` equally spaced knots over
    the bunch period; the first knot is pinned at zero because a constant
    displacement is unobservable.  A (mu + lambda) evolution strategy keeps the
    best ``elite_fraction`` of the population, recombines parents with uniform
    crossover and mutates with self-adaptive Gaussian steps.  With probability
    ``step_mutation_rate`` a child also receives a common shift of all knots
    after a random index, which lets the search move whole plateaus at once.
    With probability ``wrap_mutation_rate`` a random run of knots is moved by
    one whole wavelength; such a move leaves flat stretches of the phase
    unchanged mod 2 pi and so lets the search leave aliased branches.

    The search first runs ``restarts`` independent populations for
    ``restart_generations`` each, then continues the best of them for up to
    ``generations`` more, stopping early once the best likelihood has gained
    less than ``ftol`` over ``patience`` generations.
    """
    params = EAParams() if ea_params is None else ea_params
    ctx = LikelihoodContext(observed, config) if context is None else context
    grid = ctx.model.grid
    # knots span the data; the motion is held constant after the last one
    kt = knot_times(params.n_knots, config.window_ns[1])
    dim = params.n_knots - 1
    basis = _pchip_basis(kt, grid.times)
    lr_global = 1.0 / math.sqrt(2.0 * dim)
    lr_local = 1.0 / math.sqrt(2.0 * math.sqrt(dim))
    n_elite = params.n_elite
    n_child = params.population - n_elite
    knot_index = np.arange(dim)[None, :]

    def evaluate(pop_x):
        full = np.concatenate([np.zeros((pop_x.shape[0], 1)), pop_x], axis=1)
        phase = 2.0 * np.pi * _pchip_eval(basis, full)
        return ctx.relative(phase)

    def initial(rng):
        pop = np.zeros((params.population, dim))
        # half the population starts from random plateaus, the rest near rest
        levels = rng.uniform(-params.initial_spread, params.initial_spread, params.population)
        starts = rng.integers(0, dim, params.population)
        for i in range(params.population // 2):
            pop[i, starts[i]:] = levels[i]
        pop += rng.normal(0.0, params.initial_sigma, pop.shape)
        sigma = np.full((params.population, dim), params.initial_sigma)
        return [pop, sigma, evaluate(pop)]

    def select(state):
        pop, sigma, fit = state
        order = _rank(fit, pop)[:n_elite]
        state[:] = pop[order], sigma[order], fit[order]

    def breed(state, rng):
        pop, sigma, fit = state
        pa = rng.integers(0, n_elite, n_child)
        pb = rng.integers(0, n_elite, n_child)
        mask = rng.random((n_child, dim)) < 0.5
        child = np.where(mask, pop[pa], pop[pb])
        child_sigma = np.sqrt(sigma[pa] * sigma[pb]) * np.exp(
            lr_global * rng.normal(size=(n_child, 1)) + lr_local * rng.normal(size=(n_child, dim))
        )
        child = child + child_sigma * rng.normal(size=(n_child, dim))
        jump = rng.random(n_child) < params.step_mutation_rate
        where = rng.integers(0, dim, n_child)
        size = child_sigma[np.arange(n_child), where] * rng.normal(size=n_child) * 4.0
        child = child + (jump * size)[:, None] * (knot_index >= where[:, None])
        wrap = rng.random(n_child) < params.wrap_mutation_rate
        lo = rng.integers(0, dim, n_child)
        hi = np.where(rng.random(n_child) < 0.5, dim, rng.integers(lo + 1, dim + 1))
        run = (knot_index >= lo[:, None]) & (knot_index < hi[:, None])
        child = child + (wrap * rng.choice([-1.0, 1.0], n_child))[:, None] * run
        state[:] = (
            np.concatenate([pop, child]),
            np.concatenate([sigma, child_sigma]),
            np.concatenate([fit, evaluate(child)]),
        )

    trace = []

    def record(gen, value):
        trace.append(float(ctx.absolute(value)))
        if callback is not None:
            callback(gen, trace[-1])

    # independent short runs first; the landscape has aliased basins
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(params.restarts + 1)]
    states = [initial(r) for r in streams[:-1]]
    for state in states:
        select(state)
    if params.restarts > 1:
        for gen in range(params.restart_generations):
            record(gen, max(st[2][0] for st in states))
            for state, r in zip(states, streams):
                breed(state, r)
                select(state)
    state = max(states, key=lambda st: st[2][0])
    rng = streams[-1]
    offset = len(trace)

    best_hist = []
    converged = False
    gen = 0
    for gen in range(params.generations):
        if gen:
            select(state)
        best_hist.append(float(state[2][0]))
        record(offset + gen, best_hist[-1])
        if len(best_hist) > params.patience and best_hist[-1] - best_hist[-1 - params.patience] < params.ftol:
            converged = True
            break
        breed(state, rng)

    pop, sigma, fit = state
    order = _rank(fit, pop)
    pop, fit = pop[order], fit[order]
    best = np.concatenate([[0.0], pop[0]])
    motion = MotionProfile.from_knots(kt, best)
    lam = ctx.expected(ctx.phase_of(motion))
    elite = pop[: min(n_elite, pop.shape[0])]
    return FitResult(
        motion=motion,
        scale_factor=fit_scale(ctx.counts, lam),
        log_likelihood=poisson_log_likelihood(ctx.counts, lam, fit_scale(ctx.counts, lam)),
        generations=offset + gen + 1,
        converged=converged,
        trace=tuple(trace),
        population_spread=float(np.mean(np.std(elite, axis=0))),
        seed=seed,
    )


def _pchip_basis(kt: np.ndarray, t: np.ndarray):
    """Precompute what PCHIP evaluation at fixed abscissae needs."""
    t = np.clip(t, kt[0], kt[-1])
    idx = np.clip(np.searchsorted(kt, t, side="right") - 1, 0, kt.size - 2)
    h = np.diff(kt)
    u = (t - kt[idx]) / h[idx]
    return kt, h, idx, u


def _pchip_slopes(kt, h, y):
    """Fritsch-Carlson derivatives as used by scipy's PchipInterpolator."""
    delta = np.diff(y, axis=-1) / h
    d = np.zeros_like(y)
    w1 = 2 * h[1:] + h[:-1]
    w2 = h[1:] + 2 * h[:-1]
    d0, d1 = delta[..., :-1], delta[..., 1:]
    same = (np.sign(d0) * np.sign(d1)) > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        hm = (w1 + w2) / (w1 / d0 + w2 / d1)
    d[..., 1:-1] = np.where(same, hm, 0.0)
    d[..., 0] = _edge_slope(h[0], h[1], delta[..., 0], delta[..., 1])
    d[..., -1] = _edge_slope(h[-1], h[-2], delta[..., -1], delta[..., -2])
    return d


def _edge_slope(h0, h1, m0, m1):
    d = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1)
    d = np.where(np.sign(d) != np.sign(m0), 0.0, d)
    flip = (np.sign(m0) != np.sign(m1)) & (np.abs(d) > np.abs(3 * m0))
    return np.where(flip, 3 * m0, d)


def _pchip_eval(basis, y: np.ndarray) -> np.ndarray:
    kt, h, idx, u = basis
    d = _pchip_slopes(kt, h, y)
    y0, y1 = y[..., idx], y[..., idx + 1]
    d0, d1 = d[..., idx], d[..., idx + 1]
    hh = h[idx]
    h00 = (1 + 2 * u) * (1 - u) ** 2
    h10 = u * (1 - u) ** 2
    h01 = u * u * (3 - 2 * u)
    h11 = u * u * (u - 1)
    return h00 * y0 + h10 * hh * d0 + h01 * y1 + h11 * hh * d1


# --- single-parameter noise models ------------------------------------------

_Y_SEARCH_ZS = 60.0


def noise_motion(base: MotionProfile, model: str, parameter: float) -> MotionProfile:
    """Base motion perturbed by one of the three error models."""
    if model == "linear_drift":
        return MotionProfile("drifted_base", drift=parameter, base=base)
    if model == "scaling":
        return MotionProfile("scaled_base", scale=parameter, base=base)
    if model == "step":
        return MotionProfile("stepped_base", step_phase=parameter, base=base)
    raise InvalidArgument(f"unknown noise model {model!r}; choose from {NOISE_MODELS}")


def parameter_to_zs(model: str, parameter):
    if model == "linear_drift":
        return drift_to_zs(parameter)
    if model == "scaling":
        return scale_to_zs(parameter)
    if model == "step":
        return step_phase_to_zs(parameter)
    raise InvalidArgument(f"unknown noise model {model!r}")


def zs_to_parameter(model: str, y_zs):
    if model == "linear_drift":
        return zs_to_drift(y_zs)
    if model == "scaling":
        return y_zs / CONSTANTS.half_period_zs
    if model == "step":
        return y_zs * np.pi / CONSTANTS.half_period_zs
    raise InvalidArgument(f"unknown noise model {model!r}")


@dataclass(frozen=True)
class NoiseFit:
    model: str
    parameter: float
    log_likelihood: float
    ci_68: tuple
    y_zs: float
    y_ci_zs: tuple = (math.nan, math.nan)
    counts: int = 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci_68"] = list(self.ci_68)
        out["y_ci_zs"] = list(self.y_ci_zs)
        out["schema_version"] = SCHEMA_VERSION
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseFit":
        data = {k: v for k, v in data.items() if k != "schema_version"}
        data["ci_68"] = tuple(data["ci_68"])
        data["y_ci_zs"] = tuple(data.get("y_ci_zs", (math.nan, math.nan)))
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


class NoiseFitter:
    """Reusable forward model for many per-interval noise fits."""

    def __init__(self, config: ExperimentConfig, base: MotionProfile, model: str = "linear_drift"):
        if model not in NOISE_MODELS:
            raise InvalidArgument(f"unknown noise model {model!r}; choose from {NOISE_MODELS}")
        self.config = config
        self.base = base
        self.model_kind = model
        self.forward = ForwardModel(config)

    def fit(self, observed, search_zs: float = _Y_SEARCH_ZS) -> NoiseFit:
        if isinstance(observed, Spectrum2D):
            counts = np.asarray(observed.counts, dtype=float)
            exposure = np.asarray(observed.exposure, dtype=float)
        else:
            counts = np.asarray(observed, dtype=float)
            exposure = np.ones(counts.shape[1])
        total = counts.sum()
        if total < MIN_COUNTS:
            raise InsufficientStatistics(int(total), MIN_COUNTS)
        if exposure.sum() <= 0:
            exposure = np.ones(counts.shape[1])
        model = self.model_kind
        grid = self.forward.grid

        def loglik_y(y):
            motion = noise_motion(self.base, model, zs_to_parameter(model, y))
            lam = self.forward.intensity_from_phase(phase_from_motion(motion, grid)) * exposure
            return float(_relative_loglik(counts, lam))

        ys = np.linspace(-search_zs, search_zs, 13)
        vals = np.array([loglik_y(y) for y in ys])
        i = int(np.argmax(vals))
        lo_b = ys[max(i - 1, 0)]
        hi_b = ys[min(i + 1, ys.size - 1)]
        res = minimize_scalar(
            lambda y: -loglik_y(y),
            bracket=(lo_b, ys[i], hi_b) if 0 < i < ys.size - 1 else None,
            bounds=None if 0 < i < ys.size - 1 else (lo_b, hi_b),
            method="golden" if 0 < i < ys.size - 1 else "bounded",
            options={"xtol": 1e-10} if 0 < i < ys.size - 1 else {"xatol": 1e-8},
        )
        y_best = float(res.x)
        l_best = -float(res.fun)
        if vals[i] > l_best:
            y_best, l_best = float(ys[i]), float(vals[i])
        target = l_best - 0.5
        y_lo = _profile_edge(loglik_y, y_best, target, -1.0)
        y_hi = _profile_edge(loglik_y, y_best, target, +1.0)
        hit = counts > 0
        saturated = float(np.sum(counts[hit] * np.log(counts[hit])) - total)
        p_best = float(zs_to_parameter(model, y_best))
        p_ci = tuple(sorted((float(zs_to_parameter(model, y_lo)), float(zs_to_parameter(model, y_hi)))))
        return NoiseFit(
            model=model,
            parameter=p_best,
            log_likelihood=l_best + saturated,
            ci_68=p_ci,
            y_zs=float(parameter_to_zs(model, p_best)),
            y_ci_zs=(y_lo, y_hi),
            counts=int(total),
        )


def _profile_edge(f, y0, target, direction, step=1.0, max_expand=40):
    """Where the profile likelihood falls to ``target`` on one side of ``y0``."""
    a = y0
    b = y0 + direction * step
    fb = f(b)
    k = 0
    while fb > target and k < max_expand:
        a, b = b, y0 + direction * step * 2.0 ** (k + 1)
        fb = f(b)
        k += 1
    if fb > target:
        return b
    return float(brentq(lambda y: f(y) - target, min(a, b), max(a, b), xtol=1e-9))


def fit_noise_parameter(
    observed,
    base: MotionProfile,
    model: str = "linear_drift",
    config: Optional[ExperimentConfig] = None,
    *,
    fitter: Optional[NoiseFitter] = None,
) -> NoiseFit:
    """Maximum-likelihood value and 68 % profile interval of one noise parameter.

    The 1D search runs over the equivalent temporal deviation: a coarse scan
    locates the peak, golden-section search refines it and the interval ends
    solve ``log L = log L_max - 1/2``.
    """
    if fitter is None:
        fitter = NoiseFitter(ExperimentConfig.reduced() if config is None else config, base, model)
    elif fitter.model_kind != model or fitter.base != base:
        raise InvalidArgument("fitter was built for a different base motion or model")
    return fitter.fit(observed)


# --- dipole ------------------------------------------------------------------

def extract_dipole(
    fit: FitResult,
    target: TransmissionModel,
    scu: Optional[TransmissionModel] = None,
    config: Optional[ExperimentConfig] = None,
    model: str = "nrs",
) -> DipoleTrace:
    """Target dipole ``alpha <d(t)>`` driven by the fitted double pulse.

    ``model="nrs"`` convolves the double pulse with the target response
    (exact for thick targets); ``model="tls"`` uses the weak-drive two-level
    coherence, which agrees in the thin limit.  Passing ``fit=None`` gives the
    reference driven by a bare excitation pulse.
    """
    config = ExperimentConfig() if config is None else config
    scu = config.scu if scu is None else scu
    grid = config.grid
    if fit is None:
        drive = impulse(grid, 1.0)
    else:
        trans = multiline_transmission(scu, grid)
        phase = phase_from_motion(fit.motion, grid)
        drive = trans.with_samples(trans.samples * np.exp(1j * phase))
    if model == "nrs":
        from .signal import convolve

        resp = multiline_transmission(target, grid)
        scattered = convolve(drive, resp.smooth_part() * (1.0 / resp.singular_weight))
        return DipoleTrace(grid, scattered.samples)
    if model == "tls":
        b = target.total_b
        params = TlsParams(b)
        sigma = coherence_response(drive, params)
        return DipoleTrace(grid, params.alpha * sigma.values)
    raise InvalidArgument(f"unknown dipole model {model!r}")
