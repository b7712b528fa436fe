"""Input configurations, their cost profiles, and the normalized speed table."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class NoFeasibleConfig(RuntimeError):
    """No configuration meets the requested accuracy target."""


@dataclass(frozen=True, order=True)
class Configuration:
    """One knob setting: input resolution, segment length, sampling rate."""

    resolution: int
    segment_length: int
    sampling_rate: int

    def __post_init__(self) -> None:
        if min(self.resolution, self.segment_length, self.sampling_rate) <= 0:
            raise ValueError("all knobs must be positive")

    @property
    def span(self) -> int:
        """Stream frames covered by one invocation."""
        return self.segment_length * self.sampling_rate


@dataclass(frozen=True)
class CostProfile:
    """Measured cost and accuracy characteristics of one configuration."""

    throughput_fps: float
    tpr: float
    tnr: float
    f1_validation: float | None = None

    def __post_init__(self) -> None:
        if self.throughput_fps <= 0:
            raise ValueError("throughput_fps must be positive")
        for name in ("tpr", "tnr"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def normalize_fastness(profiles: Sequence[CostProfile | float]) -> np.ndarray:
    """Per-config speed weights: throughput divided by summed throughput."""
    if len(profiles) == 0:
        raise ValueError("need at least one profile")
    fps = np.array(
        [p.throughput_fps if isinstance(p, CostProfile) else float(p) for p in profiles],
        dtype=np.float64,
    )
    if np.any(fps <= 0):
        raise ValueError("throughputs must be positive")
    return fps / fps.sum()


def invocation_time(config: Configuration, profile: CostProfile) -> float:
    """Seconds one full-span invocation takes at this profile."""
    return config.span / profile.throughput_fps


class ConfigTable:
    """Immutable list of (Configuration, CostProfile) with speed weights.

    alphas are the normalized fastness values (sum to 1); beta is the
    fast/slow divider used by the local reward, defaulting to 1/N.
    """

    def __init__(
        self,
        entries: Sequence[tuple[Configuration, CostProfile]],
        beta: float | None = None,
    ) -> None:
        if not entries:
            raise ValueError("config table cannot be empty")
        configs = [c for c, _ in entries]
        if len(set(configs)) != len(configs):
            raise ValueError("duplicate configurations in table")
        self._entries = tuple((c, p) for c, p in entries)
        self.alphas = normalize_fastness([p for _, p in entries])
        self.alphas.setflags(write=False)
        self.beta = 1.0 / len(entries) if beta is None else float(beta)
        # <= admits the degenerate all-equal table (e.g. every knob fixed).
        if not 0.0 < self.beta <= float(self.alphas.max()):
            raise ValueError("beta must lie in (0, max(alphas)]")

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    @property
    def entries(self) -> tuple[tuple[Configuration, CostProfile], ...]:
        return self._entries

    @property
    def configs(self) -> tuple[Configuration, ...]:
        return tuple(c for c, _ in self._entries)

    @property
    def profiles(self) -> tuple[CostProfile, ...]:
        return tuple(p for _, p in self._entries)

    def config(self, index: int) -> Configuration:
        return self._entries[index][0]

    def profile(self, index: int) -> CostProfile:
        return self._entries[index][1]

    def index_of(self, config: Configuration) -> int:
        for i, (c, _) in enumerate(self._entries):
            if c == config:
                return i
        raise KeyError(f"{config} not in table")

    @property
    def max_span(self) -> int:
        return max(c.span for c in self.configs)

    def most_accurate_index(self) -> int:
        """Index of the most accurate entry (validation F1, else tpr+tnr)."""
        f1s = [p.f1_validation for p in self.profiles]
        if all(v is not None for v in f1s):
            return int(np.argmax(np.asarray(f1s, dtype=np.float64)))
        return int(np.argmax([p.tpr + p.tnr for p in self.profiles]))

    def fastest_index(self) -> int:
        return int(np.argmax(self.alphas))

    def speed_order(self) -> list[int]:
        """Indices sorted slowest to fastest (ties by table order)."""
        return sorted(range(len(self)), key=lambda i: (self.alphas[i], i))

    def with_f1(self, f1s: Sequence[float], throughputs: Sequence[float] | None = None) -> "ConfigTable":
        entries = []
        for i, (c, p) in enumerate(self._entries):
            fps = p.throughput_fps if throughputs is None else float(throughputs[i])
            entries.append((c, replace(p, throughput_fps=fps, f1_validation=float(f1s[i]))))
        return ConfigTable(entries, beta=self.beta)


def enumerate_configs(
    resolutions: Iterable[int],
    segment_lengths: Iterable[int],
    sampling_rates: Iterable[int],
) -> list[Configuration]:
    """Cartesian product, resolution-major then length then rate."""
    out = [
        Configuration(r, l, s)
        for r in sorted(set(resolutions))
        for l in sorted(set(segment_lengths))
        for s in sorted(set(sampling_rates))
    ]
    if not out:
        raise ValueError("each knob needs at least one value")
    return out


KNOB_NAMES = ("resolution", "segment_length", "sampling_rate")


def restrict_table(table: ConfigTable, knob: str, value: int) -> ConfigTable:
    """Sub-table keeping only configurations whose named knob equals value.

    beta reverts to the uniform 1/N default of the smaller table.
    """
    if knob not in KNOB_NAMES:
        raise ValueError(f"unknown knob {knob!r}; expected one of {KNOB_NAMES}")
    entries = [(c, p) for c, p in table if getattr(c, knob) == value]
    if not entries:
        raise ValueError(f"no configuration has {knob} == {value}")
    return ConfigTable(entries)


def plan_sliding_config(table: ConfigTable, target_f1: float) -> Configuration:
    """Fastest configuration whose validation F1 meets the target."""
    feasible = [
        (p.throughput_fps, -i, c)
        for i, (c, p) in enumerate(table)
        if p.f1_validation is not None and p.f1_validation >= target_f1
    ]
    if not feasible:
        raise NoFeasibleConfig(f"no configuration reaches f1 >= {target_f1}")
    return max(feasible)[2]


def estimate_cost_metrics(validation_videos, sim) -> ConfigTable:
    """Measure per-config validation F1 and throughput with the sliding runner.

    sim is a feature simulator already bound to a provisional table whose
    profiles carry the input throughput/tpr/tnr; the returned table repeats
    them with f1_validation and measured throughput filled in, and the sim
    is rebound to it.
    """
    from .executors import run_sliding  # deferred: executors imports this module

    f1s, fps = [], []
    for idx in range(len(sim.table)):
        report = run_sliding(validation_videos, sim, idx)
        f1s.append(report.f1)
        fps.append(report.throughput_fps)
    table = sim.table.with_f1(f1s, throughputs=fps)
    sim.table = table
    return table


def table_to_json(table: ConfigTable) -> dict:
    entries = []
    for c, p in table:
        row = {
            "r": c.resolution,
            "l": c.segment_length,
            "s": c.sampling_rate,
            "fps": p.throughput_fps,
            "tpr": p.tpr,
            "tnr": p.tnr,
        }
        if p.f1_validation is not None:
            row["f1"] = p.f1_validation
        entries.append(row)
    return {"entries": entries, "beta": table.beta}


def table_from_json(payload: dict) -> ConfigTable:
    entries = [
        (
            Configuration(row["r"], row["l"], row["s"]),
            CostProfile(row["fps"], row["tpr"], row["tnr"], row.get("f1")),
        )
        for row in payload["entries"]
    ]
    return ConfigTable(entries, beta=payload.get("beta"))


def save_table(table: ConfigTable, path: str | Path) -> None:
    Path(path).write_text(json.dumps(table_to_json(table), indent=2) + "\n")


def load_table(path: str | Path) -> ConfigTable:
    return table_from_json(json.loads(Path(path).read_text()))
