"""Synthetic labeled frame streams and frame-mask metrics.

Frames are indexed 0-based; every interval is half-open [start, end).
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DatasetSynthesisError(RuntimeError):
    """Raised when interval placement cannot satisfy the requested params."""


@dataclass(frozen=True)
class ActionInstance:
    """One contiguous action interval [start, end)."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end <= self.start:
            raise ValueError(f"invalid instance [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class VideoStream:
    """A labeled stream: id, frame count, and disjoint sorted instances."""

    id: str
    num_frames: int
    instances: tuple[ActionInstance, ...] = ()

    def __post_init__(self) -> None:
        if self.num_frames <= 0:
            raise ValueError("num_frames must be positive")
        prev_end = -1  # enforce >= 1 gap frame between instances
        for inst in self.instances:
            if inst.start <= prev_end:
                raise ValueError("instances must be sorted with >= 1 gap frame")
            if inst.end > self.num_frames:
                raise ValueError("instance exceeds stream length")
            prev_end = inst.end

    def mask(self) -> np.ndarray:
        """Ground-truth boolean mask, one bit per frame."""
        out = np.zeros(self.num_frames, dtype=bool)
        for inst in self.instances:
            out[inst.start : inst.end] = True
        return out

    def action_frames(self) -> int:
        return sum(inst.length for inst in self.instances)


@dataclass(frozen=True)
class DatasetParams:
    """Generation parameters for one synthetic dataset."""

    num_videos: int
    frames_per_video: int
    action_fraction: float
    mean_action_len: float
    std_action_len: float
    min_action_len: int
    max_action_len: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_videos <= 0 or self.frames_per_video <= 0:
            raise ValueError("num_videos and frames_per_video must be positive")
        if not 0.0 <= self.action_fraction < 1.0:
            raise ValueError("action_fraction must lie in [0, 1)")
        if not 1 <= self.min_action_len <= self.max_action_len:
            raise ValueError("need 1 <= min_action_len <= max_action_len")
        if not self.min_action_len <= self.mean_action_len <= self.max_action_len:
            raise ValueError("mean_action_len must lie within [min, max]")
        if self.std_action_len < 0:
            raise ValueError("std_action_len must be non-negative")
        if self.mean_action_len >= self.frames_per_video:
            raise ValueError("mean_action_len must be below frames_per_video")


# Placement attempts allowed before synthesis gives up.
_MAX_ATTEMPTS = 10_000


def _draw_length(rng: np.random.Generator, p: DatasetParams, cap: int) -> int:
    """Truncated-normal instance length: normal draw clamped to [min, max]."""
    raw = rng.normal(p.mean_action_len, p.std_action_len)
    lo = p.min_action_len
    hi = min(p.max_action_len, cap)
    return int(np.clip(round(raw), lo, hi))


def _feasible_starts(
    placed: list[tuple[int, int]], length: int, nf: int
) -> list[tuple[int, int]]:
    """Inclusive start ranges where a length-frame instance fits.

    Existing instances demand >= 1 separating frame on each side; the video
    edges demand none.
    """
    ranges = []
    free_lo = 0
    for a, b in sorted(placed) + [(nf + 1, nf + 1)]:
        hi = (a - 1) - length
        if hi >= free_lo:
            ranges.append((free_lo, hi))
        free_lo = b + 1
    return ranges


def synth_dataset(params: DatasetParams) -> list[VideoStream]:
    """Generate num_videos labeled streams matching params.

    Instances are placed round-robin across videos until the dataset-wide
    action fraction is met; each start is drawn uniformly over the positions
    that keep instances separated, so dense packings (action fractions past
    0.5) terminate.  Deterministic in the seed.
    """
    rng = np.random.default_rng(params.seed)
    nf = params.frames_per_video
    per_video: list[list[tuple[int, int]]] = [[] for _ in range(params.num_videos)]
    total_target = params.action_fraction * nf * params.num_videos
    total_placed = 0
    failed_attempts = 0
    barren_rounds = 0

    while total_placed < total_target and barren_rounds < 20:
        progressed = False
        for vid in range(params.num_videos):
            if total_placed >= total_target:
                break
            length = _draw_length(rng, params, nf)
            overshoot = (total_placed + length) - total_target
            if overshoot > total_target - total_placed:
                continue  # stopping is closer to the target than placing
            ranges = _feasible_starts(per_video[vid], length, nf)
            room = sum(hi - lo + 1 for lo, hi in ranges)
            if room == 0:
                failed_attempts += 1
                if failed_attempts >= _MAX_ATTEMPTS:
                    raise DatasetSynthesisError(
                        f"gave up after {_MAX_ATTEMPTS} placement attempts"
                    )
                continue
            pick = int(rng.integers(0, room))
            for lo, hi in ranges:
                if pick <= hi - lo:
                    start = lo + pick
                    break
                pick -= hi - lo + 1
            per_video[vid].append((start, start + length))
            total_placed += length
            failed_attempts = 0
            progressed = True
        barren_rounds = 0 if progressed else barren_rounds + 1

    # seed tag keeps ids unique across datasets; downstream caches and RNG
    # streams key on the id alone
    tag = params.seed & 0xFFFF
    videos = [
        VideoStream(
            id=f"v{tag:04x}-{vid:03d}",
            num_frames=nf,
            instances=tuple(ActionInstance(a, b) for a, b in sorted(per_video[vid])),
        )
        for vid in range(params.num_videos)
    ]
    if params.action_fraction > 0:
        measured = measured_fraction(videos)
        rel = abs(measured - params.action_fraction) / params.action_fraction
        if rel > 0.20:
            raise DatasetSynthesisError(
                f"measured fraction {measured:.4f} misses target "
                f"{params.action_fraction:.4f} by {rel:.1%}"
            )
    return videos


def measured_fraction(videos: Sequence[VideoStream]) -> float:
    total = sum(v.num_frames for v in videos)
    return sum(v.action_frames() for v in videos) / total


def label_at(video: VideoStream, n: int) -> bool:
    """Ground-truth label of frame n."""
    if not 0 <= n < video.num_frames:
        raise IndexError(f"frame {n} outside [0, {video.num_frames})")
    starts = [inst.start for inst in video.instances]
    i = bisect.bisect_right(starts, n) - 1
    return i >= 0 and n < video.instances[i].end


def action_overlap(video: VideoStream, start: int, end: int) -> int:
    """Number of action frames inside [start, end)."""
    total = 0
    for inst in video.instances:
        if inst.start >= end:
            break
        total += max(0, min(end, inst.end) - max(start, inst.start))
    return total


def window_label(
    video: VideoStream,
    start: int,
    end: int,
    *,
    method: str = "fraction",
    threshold: float = 0.5,
) -> bool:
    """Binary label of the window [start, end).

    method "fraction" (default): true when the in-window action-frame
    fraction exceeds threshold.  method "instance_iou": true when some
    instance has interval IoU with the window above threshold.
    """
    if not 0 <= start < end <= video.num_frames:
        raise ValueError(f"invalid window [{start}, {end})")
    if method == "fraction":
        return action_overlap(video, start, end) / (end - start) > threshold
    if method == "instance_iou":
        for inst in video.instances:
            inter = max(0, min(end, inst.end) - max(start, inst.start))
            union = max(end, inst.end) - min(start, inst.start)
            if inter / union > threshold:
                return True
        return False
    raise ValueError(f"unknown window_label method {method!r}")


@dataclass(frozen=True)
class MaskScores:
    """Frame-level confusion counts and derived scores."""

    tp: int
    fp: int
    fn: int
    tn: int
    precision: float = field(init=False)
    recall: float = field(init=False)
    f1: float = field(init=False)

    def __post_init__(self) -> None:
        p = self.tp / (self.tp + self.fp) if self.tp + self.fp else (1.0 if self.fn == 0 else 0.0)
        r = self.tp / (self.tp + self.fn) if self.tp + self.fn else (1.0 if self.fp == 0 else 0.0)
        f = 2 * p * r / (p + r) if p + r else 0.0
        object.__setattr__(self, "precision", p)
        object.__setattr__(self, "recall", r)
        object.__setattr__(self, "f1", f)


def frame_f1(pred: np.ndarray, gt: np.ndarray) -> MaskScores:
    """Frame-level precision/recall/F1 of pred against gt.

    Both masks empty scores f1 = 1; exactly one empty scores f1 = 0.
    """
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError("pred and gt masks must have equal length")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    tn = int(pred.size - tp - fp - fn)
    return MaskScores(tp=tp, fp=fp, fn=fn, tn=tn)


def save_dataset(videos: Iterable[VideoStream], path: str | Path) -> None:
    payload = {
        "videos": [
            {
                "id": v.id,
                "num_frames": v.num_frames,
                "instances": [[i.start, i.end] for i in v.instances],
            }
            for v in videos
        ]
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_dataset(path: str | Path) -> list[VideoStream]:
    payload = json.loads(Path(path).read_text())
    return [
        VideoStream(
            id=entry["id"],
            num_frames=entry["num_frames"],
            instances=tuple(ActionInstance(a, b) for a, b in entry["instances"]),
        )
        for entry in payload["videos"]
    ]
