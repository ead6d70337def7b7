"""File formats: event CSV with a commented metadata header, JSON helpers, digests."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from .errors import InvalidArgument
from .experiment import SCHEMA_VERSION, EventList, ExperimentConfig, ScanSchedule

EVENT_COLUMNS = ("t_ns", "delta_gamma", "lab_time_s")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_events(path, events: EventList, config: Optional[ExperimentConfig] = None) -> None:
    """One event per row; ``#`` lines above the header hold the metadata."""
    meta = events.metadata()
    if config is not None:
        meta["config"] = config.to_dict()
    frame = pd.DataFrame(
        {"t_ns": events.t, "delta_gamma": events.delta, "lab_time_s": events.lab_time},
        columns=list(EVENT_COLUMNS),
    )
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        fh.write("# meta=" + json.dumps(meta, sort_keys=True) + "\n")
        frame.to_csv(fh, index=False, lineterminator="\n")


def read_events(path) -> Tuple[EventList, Optional[ExperimentConfig]]:
    path = Path(path)
    if not path.is_file():
        raise InvalidArgument(f"event file not found: {path}")
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if body.startswith("meta="):
                try:
                    meta = json.loads(body[len("meta="):])
                except json.JSONDecodeError as exc:
                    raise InvalidArgument(f"{path}: unreadable metadata line: {exc}") from exc
            elif body.startswith("schema_version="):
                version = int(body.split("=", 1)[1])
                if version > SCHEMA_VERSION:
                    raise InvalidArgument(f"{path}: schema_version {version} is newer than supported")
    try:
        frame = pd.read_csv(path, comment="#", dtype=float, float_precision="round_trip")
    except (pd.errors.EmptyDataError, ValueError) as exc:
        raise InvalidArgument(f"{path}: malformed event file: {exc}") from exc
    missing = [c for c in EVENT_COLUMNS if c not in frame.columns]
    if missing:
        raise InvalidArgument(f"{path}: missing column(s) {missing}")
    lab = frame["lab_time_s"].to_numpy()
    order = np.argsort(lab, kind="stable")
    schedule = meta.get("schedule")
    window = meta.get("window_s")
    if window is None:
        window = (float(lab.min()), float(lab.max())) if lab.size else (0.0, 0.0)
    events = EventList(
        frame["t_ns"].to_numpy()[order],
        frame["delta_gamma"].to_numpy()[order],
        lab[order],
        tuple(meta.get("detunings_gamma", ())),
        None if schedule is None else ScanSchedule.from_dict(schedule),
        tuple(window),
        tuple(tuple(d) for d in meta.get("dropouts", ())),
    )
    config = meta.get("config")
    return events, None if config is None else ExperimentConfig.from_dict(config)


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InvalidArgument(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"{path}: invalid JSON: {exc}") from exc


def write_text(path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)
