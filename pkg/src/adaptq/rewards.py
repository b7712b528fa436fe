"""Per-decision and windowed reward signals for configuration policies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .streams import frame_f1

WINDOW_METRICS = ("f1", "f1_strict", "plain")
REWARD_MODES = ("local", "aggregate")


@dataclass(frozen=True)
class RewardParams:
    """Reward configuration shared by training and evaluation."""

    beta: float
    target_accuracy: float
    window_frames: int = 512
    mode: str = "aggregate"
    window_metric: str = "f1"

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        # target 1.0 would divide by zero in the aggregate formula
        if not 0.0 < self.target_accuracy < 1.0:
            raise ValueError("target_accuracy must lie in (0, 1)")
        if self.window_frames < 1:
            raise ValueError("window_frames must be positive")
        if self.mode not in REWARD_MODES:
            raise ValueError(f"mode must be one of {REWARD_MODES}")
        if self.window_metric not in WINDOW_METRICS:
            raise ValueError(f"window_metric must be one of {WINDOW_METRICS}")


def local_reward(alpha_curr: float, window_has_action: bool, beta: float) -> float:
    """Per-decision reward: beta - alpha on action windows, alpha otherwise.

    Slower configurations (small alpha) win on action windows, faster ones
    (large alpha) win on empty windows.  alpha_curr == 1 is the degenerate
    single-configuration table.
    """
    if not 0.0 < alpha_curr <= 1.0:
        raise ValueError("alpha_curr must lie in (0, 1]")
    return beta - alpha_curr if window_has_action else alpha_curr


def window_accuracy(gt: np.ndarray, pred: np.ndarray, *, metric: str = "f1") -> float:
    """Accuracy of pred against gt over one reward window.

    "f1": frame-level F1 when gt has positives, else plain accuracy (so a
    spotless empty window scores 1.0 and stray false positives degrade it
    smoothly).  "f1_strict": F1 whenever either mask has positives, 1.0 only
    when both are empty.  "plain": fraction of matching frames.
    """
    gt = np.asarray(gt, dtype=bool)
    pred = np.asarray(pred, dtype=bool)
    if gt.shape != pred.shape or gt.size == 0:
        raise ValueError("gt and pred must be equal-length, non-empty masks")
    if metric == "plain":
        return float(np.mean(gt == pred))
    if metric == "f1":
        if gt.any():
            return frame_f1(pred, gt).f1
        return float(np.mean(gt == pred))
    if metric == "f1_strict":
        if gt.any() or pred.any():
            return frame_f1(pred, gt).f1
        return 1.0
    raise ValueError(f"unknown window metric {metric!r}")


def aggregate_reward(achieved: float, target: float) -> float:
    """Shared window reward: (1 - achieved) / (1 - target) when the target
    is met (1 at the target, shrinking as accuracy overshoots), else the
    negative shortfall achieved - target."""
    if not 0.0 <= target < 1.0:
        raise ValueError("target must lie in [0, 1)")
    if achieved >= target:
        return (1.0 - achieved) / (1.0 - target)
    return achieved - target


@dataclass
class WindowAccumulator:
    """Collects decisions and their frame slices until a reward window closes.

    A window closes at the first decision whose cumulative coverage reaches
    window_frames (it may overshoot by at most one span) or at an episode
    boundary; flush() then assigns one shared reward to every pending
    decision payload.
    """

    window_frames: int
    pending: list[Any] = field(default_factory=list)
    frames_covered: int = 0
    _gt: list[np.ndarray] = field(default_factory=list)
    _pred: list[np.ndarray] = field(default_factory=list)

    def push(self, payload: Any, gt_bits: np.ndarray, pred_bits: np.ndarray) -> None:
        """Add one covered window; payload None covers frames without a decision."""
        gt_bits = np.asarray(gt_bits, dtype=bool)
        pred_bits = np.asarray(pred_bits, dtype=bool)
        if gt_bits.shape != pred_bits.shape:
            raise ValueError("gt and pred slices must have equal length")
        if payload is not None:
            self.pending.append(payload)
        self._gt.append(gt_bits)
        self._pred.append(pred_bits)
        self.frames_covered += gt_bits.size

    @property
    def ready(self) -> bool:
        return self.frames_covered >= self.window_frames

    def flush(self, params: RewardParams) -> tuple[list[Any], float, float]:
        """Close the window: returns (payloads, shared reward, achieved accuracy)."""
        if self.frames_covered == 0:
            raise ValueError("cannot flush an empty window")
        achieved = window_accuracy(
            np.concatenate(self._gt), np.concatenate(self._pred), metric=params.window_metric
        )
        reward = aggregate_reward(achieved, params.target_accuracy)
        payloads = self.pending
        self.pending = []
        self._gt = []
        self._pred = []
        self.frames_covered = 0
        return payloads, reward, achieved
