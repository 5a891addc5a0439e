"""Canonical JSON, per-trial CSV and run manifests."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .scenarios import ScenarioConfig, TrialOutcome

MANIFEST_NAME = "manifest.json"
TRACE_COLUMNS = ("trial", "step", "t", "component_id", "re_amp", "im_amp", "sq_modulus", "current_j")
OUTCOME_COLUMNS = ("trial", "n_collapses", "first_detector", "first_outcome_spin", "second_outcome_spin",
                   "anticorrelated", "dual", "t_first", "t_second", "order")


def _plain(obj: Any) -> Any:
    """Recursively turn numpy scalars, tuples and non-finite floats into JSON values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj: Any) -> str:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_json(obj: Any, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


@dataclass
class RunManifest:
    scenario: str
    config: dict
    seed: int
    tool_version: str = __version__
    outputs: list[str] = field(default_factory=list)
    command: str = ""
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "config": self.config,
            "seed": self.seed,
            "tool_version": self.tool_version,
            "outputs": sorted(self.outputs),
            "command": self.command,
            "options": self.options,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(d["scenario"], d["config"], int(d["seed"]), d.get("tool_version", __version__),
                   list(d.get("outputs", [])), d.get("command", ""), dict(d.get("options", {})))

    def write(self, out_dir: str | Path) -> Path:
        return write_json(self.to_dict(), Path(out_dir) / MANIFEST_NAME)


def load_config(path: str | Path) -> tuple[ScenarioConfig, dict]:
    """Read a scenario configuration or a run manifest.

    Returns the configuration and any extra CLI options stored in a manifest.
    """
    data = read_json(path)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: configuration must be a JSON object")
    if "config" in data and "scenario" in data:
        return ScenarioConfig.from_dict(data["config"]), dict(data.get("options", {}))
    return ScenarioConfig.from_dict(data), {}


def write_outcomes_csv(outcomes: Iterable[TrialOutcome], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(OUTCOME_COLUMNS)
        for o in outcomes:
            recs = o.ledger.records
            w.writerow([
                o.trial_index, len(recs), o.first_detector or "", o.first_outcome_spin or "",
                o.second_outcome_spin or "", int(o.anticorrelated), int(o.dual),
                f"{recs[0].trial_time:.12g}" if recs else "", f"{recs[1].trial_time:.12g}" if len(recs) > 1 else "",
                ";".join(r.vertex.label for r in recs),
            ])
    return path


def write_trace_csv(outcomes: Sequence[TrialOutcome], path: str | Path) -> Path:
    """Amplitude traces of the recorded trials, one row per step and component."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for o in outcomes:
            for step, t, cid, re, im, sq, j in o.trace or ():
                w.writerow([o.trial_index, step, f"{t:.12g}", cid, f"{re:.17g}", f"{im:.17g}", f"{sq:.17g}",
                            "" if not math.isfinite(j) else f"{j:.17g}"])
    return path
