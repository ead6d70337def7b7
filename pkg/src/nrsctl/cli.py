"""Command-line front end: simulate, fit, analyze, export.

Every command writes a run manifest (``<out>.manifest.json``) recording the
arguments, seed, tool version and SHA-256 digests of all files read and
written.  ``nrsctl replay MANIFEST`` re-runs a command and checks that the
outputs reproduce bit for bit.

Exit codes: 0 success, 1 replay mismatch, 2 input error, 3 fit did not
converge, 4 insufficient statistics.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional


from . import __version__
from .errors import InsufficientStatistics, InvalidArgument
from .experiment import (
    ExperimentConfig,
    simulate,
    simulated_crossover,
    spectrum_for_config,
)
from .io import read_events, read_json, sha256_file, write_events, write_text
from .pulse import canonical_motion
from .reconstruction import EAParams, FitResult, extract_dipole, fit_motion_evolutionary
from .stability import THREADS_ENV, allan_curve
from .tls import crossover_time

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INPUT = 2
EXIT_NONCONVERGED = 3
EXIT_STATISTICS = 4

MANIFEST_SCHEMA = 1


@dataclass
class RunManifest:
    command: str
    argv: List[str]
    config_path: Optional[str] = None
    seed: Optional[int] = None
    tool_version: str = __version__
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    exit_code: int = 0

    def to_dict(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA,
            "command": self.command,
            "argv": self.argv,
            "config_path": self.config_path,
            "seed": self.seed,
            "tool_version": self.tool_version,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_clock_s": self.wall_clock_s,
            "exit_code": self.exit_code,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        keys = ("command", "argv", "config_path", "seed", "tool_version", "inputs", "outputs",
                "wall_clock_s", "exit_code")
        return cls(**{k: data[k] for k in keys if k in data})


def _load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(read_json(path))


def _digests(paths) -> dict:
    return {str(p): sha256_file(p) for p in paths if p is not None and Path(p).is_file()}


# --- commands ------------------------------------------------------------------

def cmd_simulate(args):
    config = _load_config(args.config)
    events = simulate(config, args.seed)
    write_events(args.out, events, config)
    print(f"wrote {len(events)} events to {args.out}")
    return [args.config], [args.out], EXIT_OK


def cmd_fit_motion(args):
    events, embedded = read_events(args.events)
    config = _load_config(args.config) if args.config else embedded
    if config is None:
        raise InvalidArgument("no config given and the event file carries none")
    if len(events) == 0:
        raise InvalidArgument(f"{args.events} contains no events")
    spectrum = spectrum_for_config(events, config)
    params = EAParams(
        population=args.population,
        generations=args.generations,
        n_knots=args.knots,
        restarts=args.restarts,
        restart_generations=args.restart_generations,
    )
    fit = fit_motion_evolutionary(spectrum, config, params, seed=args.seed)
    write_text(args.out, fit.to_json())
    outputs = [args.out]
    if args.trace:
        write_text(args.trace, fit.trace_csv())
        outputs.append(args.trace)
    print(
        f"log-likelihood {fit.log_likelihood:.3f} after {fit.generations} generations, "
        f"terminal phase {fit.terminal_phase(config.window_ns[1]):.4f} rad"
    )
    code = EXIT_OK
    if not fit.converged and not args.allow_nonconverged:
        print("fit did not converge within the generation budget", file=sys.stderr)
        code = EXIT_NONCONVERGED
    return [args.events, args.config], outputs, code


_MODEL_NAMES = {"linear": "linear_drift", "scaling": "scaling", "step": "step"}
_BINNING = {"time": "equal_time", "counts": "equal_counts"}


def cmd_allan(args):
    events, embedded = read_events(args.events)
    config = _load_config(args.config) if args.config else embedded
    if config is None:
        raise InvalidArgument("no config given and the event file carries none")
    fit = FitResult.from_dict(read_json(args.fit))
    taus = None
    if args.taus:
        try:
            taus = [float(t) for t in args.taus.split(",")]
        except ValueError as exc:
            raise InvalidArgument(f"--taus: {exc}") from exc
    if len(events) == 0:
        raise InsufficientStatistics(0, 100)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        series = allan_curve(
            events,
            taus,
            fit.motion,
            _MODEL_NAMES[args.model],
            config,
            mode=_BINNING[args.binning],
            seed=args.seed,
            workers=args.threads,
        )
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if not series.points:
        raise InsufficientStatistics(len(events), 100)
    write_text(args.out, series.to_csv())
    print(f"wrote {len(series.points)} Allan points to {args.out}")
    return [args.events, args.fit, args.config], [args.out], EXIT_OK


_CASES = {"SE": "stimulated_emission", "boost": "enhanced_excitation"}


def cmd_dipole(args):
    config = _load_config(args.config)
    if args.case == "none":
        fit = None
    elif args.case in _CASES:
        motion = canonical_motion(_CASES[args.case])
        fit = FitResult(motion, 1.0, 0.0, 0, True)
    else:
        if args.fit is None:
            raise InvalidArgument("a fit file is required unless --case is given")
        fit = FitResult.from_dict(read_json(args.fit))
    trace = extract_dipole(fit, config.target, config.scu, config, model=args.model)
    write_text(args.out, trace.to_csv())
    print(f"wrote dipole trace to {args.out}")
    return [args.fit, args.config], [args.out], EXIT_OK


def cmd_crossover(args):
    config = _load_config(args.config)
    b = config.target.total_b
    analytic = crossover_time(b)
    simulated = simulated_crossover(config)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "b_gamma", "crossover_ns"])
    w.writerow(["thin_analytic", repr(b), repr(analytic)])
    w.writerow(["full_simulated", repr(b), "" if simulated is None else repr(simulated)])
    write_text(args.out, buf.getvalue())
    sim_txt = "none" if simulated is None else f"{simulated:.2f} ns"
    print(f"thin-limit crossover {analytic:.2f} ns, full model {sim_txt}")
    return [args.config], [args.out], EXIT_OK


def cmd_replay(args):
    manifest = RunManifest.from_dict(read_json(args.manifest))
    for path, digest in manifest.inputs.items():
        if not Path(path).is_file() or sha256_file(path) != digest:
            raise InvalidArgument(f"input {path} is missing or changed since the recorded run")
    code = main(manifest.argv, write_manifest=False)
    if code != manifest.exit_code:
        print(f"replay exit code {code}, recorded {manifest.exit_code}", file=sys.stderr)
        return [], [], EXIT_MISMATCH
    bad = [p for p, d in manifest.outputs.items() if not Path(p).is_file() or sha256_file(p) != d]
    if bad:
        print("output digest mismatch: " + ", ".join(bad), file=sys.stderr)
        return [], [], EXIT_MISMATCH
    print(f"replay reproduced {len(manifest.outputs)} output(s)")
    return [], [], EXIT_OK


# --- parser --------------------------------------------------------------------

def _threads_default() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nrsctl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--threads", type=int, default=_threads_default(),
        help=f"worker threads (default from ${THREADS_ENV}, else 1); results do not depend on it",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a photon event list")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit-motion", help="reconstruct the absorber motion")
    p.add_argument("events")
    p.add_argument("config", nargs="?")
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--generations", type=int, default=EAParams.generations)
    p.add_argument("--population", type=int, default=EAParams.population)
    p.add_argument("--knots", type=int, default=EAParams.n_knots)
    p.add_argument("--restarts", type=int, default=EAParams.restarts)
    p.add_argument("--restart-generations", type=int, default=EAParams.restart_generations)
    p.add_argument("--allow-nonconverged", action="store_true")
    p.set_defaults(func=cmd_fit_motion)

    p = sub.add_parser("allan", help="Allan deviation of fitted temporal deviations")
    p.add_argument("events")
    p.add_argument("fit")
    p.add_argument("--config")
    p.add_argument("--model", choices=sorted(_MODEL_NAMES), default="linear")
    p.add_argument("--binning", choices=sorted(_BINNING), default="time")
    p.add_argument("--taus", help="comma-separated sampling times in seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_allan)

    p = sub.add_parser("dipole", help="export the target dipole trace")
    p.add_argument("fit", nargs="?")
    p.add_argument("--config", required=True)
    p.add_argument("--case", choices=["SE", "boost", "none"])
    p.add_argument("--model", choices=["tls", "nrs"], default="tls")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dipole)

    p = sub.add_parser("crossover", help="analytic and simulated crossover times")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_crossover)

    p = sub.add_parser("replay", help="re-run a recorded command and verify its outputs")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Optional[List[str]] = None, write_manifest: bool = True) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    started = time.perf_counter()
    inputs: list = []
    outputs: list = []
    try:
        inputs, outputs, code = args.func(args)
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    except InsufficientStatistics as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_STATISTICS
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    if write_manifest and args.command != "replay" and getattr(args, "out", None):
        manifest = RunManifest(
            command=args.command,
            argv=argv,
            config_path=getattr(args, "config", None),
            seed=getattr(args, "seed", None),
            inputs=_digests(inputs),
            outputs=_digests(outputs),
            wall_clock_s=round(time.perf_counter() - started, 3),
            exit_code=code,
        )
        write_text(str(args.out) + ".manifest.json", json.dumps(manifest.to_dict(), indent=1))
    return code


if __name__ == "__main__":
    sys.exit(main())
