"""Named dataset and configuration-table presets.

Generated tables use a synthetic cost model: one invocation costs a fixed
overhead plus a per-pixel-frame term, so throughput grows with sampling
rate, mildly with segment length, and shrinks with resolution.  Accuracy
(tpr/tnr) decreases monotonically in throughput, making speed and quality
a genuine trade-off.
"""

from __future__ import annotations

import math

from .configs import ConfigTable, Configuration, CostProfile, enumerate_configs
from .streams import DatasetParams

# Invocation cost: seconds = T_BASE + PIXEL_COST * segment_length * resolution^2.
T_BASE = 0.0195
PIXEL_COST = 6.05e-8

# Accuracy endpoints across a table, slowest config first.
TPR_RANGE = (0.95, 0.60)
TNR_RANGE = (0.9985, 0.955)

DATASET_PRESETS: dict[str, dict] = {
    "bdd": {
        "action_fraction": 0.0703,
        "mean_action_len": 115.0,
        "std_action_len": 58.7,
        "min_action_len": 6,
        "max_action_len": 305,
        "num_videos": 8,
        "frames_per_video": 2048,
    },
    "thumos": {
        "action_fraction": 0.4027,
        "mean_action_len": 211.0,
        "std_action_len": 186.3,
        "min_action_len": 18,
        "max_action_len": 3543,
        "num_videos": 6,
        "frames_per_video": 4096,
    },
    "activitynet": {
        "action_fraction": 0.5637,
        "mean_action_len": 909.0,
        "std_action_len": 1239.1,
        "min_action_len": 20,
        "max_action_len": 6931,
        "num_videos": 4,
        "frames_per_video": 8192,
    },
}

KNOB_PRESETS: dict[str, dict] = {
    "bdd": {
        "resolutions": (150, 200, 250, 300),
        "segment_lengths": (2, 4, 6, 8),
        "sampling_rates": (1, 2, 4, 8),
    },
    "thumos": {
        "resolutions": (40, 80, 160),
        "segment_lengths": (32, 48, 64),
        "sampling_rates": (2, 4, 8),
    },
    "activitynet": {
        "resolutions": (40, 80, 160),
        "segment_lengths": (32, 48, 64),
        "sampling_rates": (2, 4, 8),
    },
}

# Four-entry reference table: throughputs from the calibration runs the
# synthetic cost model was fitted to, accuracies tuned so validation F1
# rises as throughput falls.  tpr+tnr must also rise monotonically: that
# sum is the accuracy ranking used before any validation F1 is measured.
REFERENCE_ENTRIES: tuple[tuple[tuple[int, int, int], tuple[float, float, float]], ...] = (
    ((150, 4, 8), (1282.0, 0.66, 0.9915)),
    ((200, 4, 4), (553.0, 0.83, 0.9835)),
    ((250, 6, 2), (285.0, 0.93, 0.9925)),
    ((300, 6, 1), (115.0, 0.945, 0.9945)),
)


def dataset_preset(
    name: str,
    *,
    num_videos: int | None = None,
    frames_per_video: int | None = None,
    seed: int = 0,
) -> DatasetParams:
    if name not in DATASET_PRESETS:
        raise KeyError(f"unknown dataset preset {name!r}")
    spec = DATASET_PRESETS[name]
    return DatasetParams(
        num_videos=num_videos if num_videos is not None else spec["num_videos"],
        frames_per_video=(
            frames_per_video if frames_per_video is not None else spec["frames_per_video"]
        ),
        action_fraction=spec["action_fraction"],
        mean_action_len=spec["mean_action_len"],
        std_action_len=spec["std_action_len"],
        min_action_len=spec["min_action_len"],
        max_action_len=spec["max_action_len"],
        seed=seed,
    )


def model_throughput(config: Configuration) -> float:
    """Synthetic cost model throughput for one configuration."""
    seconds = T_BASE + PIXEL_COST * config.segment_length * config.resolution**2
    return config.span / seconds


def build_table(configs: list[Configuration], beta: float | None = None) -> ConfigTable:
    """Cost-model table over arbitrary configs with monotone accuracy."""
    fps = [model_throughput(c) for c in configs]
    lo, hi = math.log(min(fps)), math.log(max(fps))
    entries = []
    for c, f in zip(configs, fps):
        x = 0.0 if hi == lo else (math.log(f) - lo) / (hi - lo)  # 0 slowest, 1 fastest
        tpr = TPR_RANGE[0] + (TPR_RANGE[1] - TPR_RANGE[0]) * x
        tnr = TNR_RANGE[0] + (TNR_RANGE[1] - TNR_RANGE[0]) * x
        entries.append((c, CostProfile(throughput_fps=f, tpr=tpr, tnr=tnr)))
    return ConfigTable(entries, beta=beta)


def config_table_preset(name: str, beta: float | None = None) -> ConfigTable:
    if name == "reference":
        return reference_table(beta=beta)
    if name not in KNOB_PRESETS:
        raise KeyError(f"unknown config table preset {name!r}")
    knobs = KNOB_PRESETS[name]
    configs = enumerate_configs(
        knobs["resolutions"], knobs["segment_lengths"], knobs["sampling_rates"]
    )
    return build_table(configs, beta=beta)


def reference_table(beta: float | None = None) -> ConfigTable:
    entries = [
        (Configuration(*knobs), CostProfile(fps, tpr, tnr))
        for knobs, (fps, tpr, tnr) in REFERENCE_ENTRIES
    ]
    return ConfigTable(entries, beta=beta)
