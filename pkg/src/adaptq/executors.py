"""Stream executors: run a configuration strategy over labeled videos.

Every executor partitions each stream into consecutive windows, sets the
predicted mask bits of a window to that invocation's binary prediction,
and accounts simulated cost per invocation.  Reports pool frame-level
confusion counts over all videos.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .configs import ConfigTable, CostProfile, invocation_time
from .proxy import ApfgSim, FeatureCache
from .qnet import QNetwork
from .streams import MaskScores, VideoStream, window_label

# Consecutive no-action predictions before the heuristic jumps to the
# fastest configuration.
NO_ACTION_PATIENCE = 10

# A per-frame classifier invocation is this much faster than one
# invocation of the most accurate windowed configuration.
FRAME_SPEED_RATIO = 5.9


@dataclass(frozen=True)
class PerVideoStats:
    video_id: str
    frames: int
    cost_seconds: float
    invocations: int
    scores: MaskScores

    @property
    def throughput_fps(self) -> float:
        return self.frames / self.cost_seconds


@dataclass(frozen=True)
class ExecutionReport:
    strategy: str
    per_video: tuple[PerVideoStats, ...]
    masks: dict[str, np.ndarray]
    scores: MaskScores
    config_histogram: np.ndarray
    resolution_split: dict[str, int]
    traces: tuple[dict, ...] | None = None

    @property
    def video_ids(self) -> tuple[str, ...]:
        return tuple(v.video_id for v in self.per_video)

    @property
    def frames_covered(self) -> int:
        return sum(v.frames for v in self.per_video)

    @property
    def total_cost_seconds(self) -> float:
        return sum(v.cost_seconds for v in self.per_video)

    @property
    def invocations(self) -> int:
        return sum(v.invocations for v in self.per_video)

    @property
    def throughput_fps(self) -> float:
        return self.frames_covered / self.total_cost_seconds

    @property
    def precision(self) -> float:
        return self.scores.precision

    @property
    def recall(self) -> float:
        return self.scores.recall

    @property
    def f1(self) -> float:
        return self.scores.f1


def mask_to_segments(mask: np.ndarray) -> list[tuple[int, int]]:
    """Contiguous true runs of a mask as half-open [start, end) pairs."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        return []
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return [(int(edges[i]), int(edges[i + 1])) for i in range(0, len(edges), 2)]


@dataclass
class _VideoRun:
    video_id: str
    frames: int
    cost_seconds: float
    invocations: int
    mask: np.ndarray
    hist: np.ndarray
    trace: list[dict]


def _resolution_split(table: ConfigTable, hist: np.ndarray) -> dict[str, int]:
    # "lo" collects frames processed strictly below the median distinct resolution.
    median = float(np.median(sorted({c.resolution for c in table.configs})))
    lo = sum(int(hist[i]) for i, c in enumerate(table.configs) if c.resolution < median)
    return {"lo": lo, "hi": int(hist.sum()) - lo}


def _assemble(
    strategy: str,
    table: ConfigTable,
    videos: Sequence[VideoStream],
    runs: Sequence[_VideoRun],
    record_trace: bool,
) -> ExecutionReport:
    per_video = []
    tp = fp = fn = tn = 0
    for video, run in zip(videos, runs):
        if run.frames != video.num_frames:
            raise AssertionError(f"{strategy} left frames of {video.id} uncovered")
        gt = video.mask()
        vtp = int(np.count_nonzero(run.mask & gt))
        vfp = int(np.count_nonzero(run.mask & ~gt))
        vfn = int(np.count_nonzero(~run.mask & gt))
        vtn = run.mask.size - vtp - vfp - vfn
        tp, fp, fn, tn = tp + vtp, fp + vfp, fn + vfn, tn + vtn
        per_video.append(
            PerVideoStats(
                video_id=video.id,
                frames=run.frames,
                cost_seconds=run.cost_seconds,
                invocations=run.invocations,
                scores=MaskScores(tp=vtp, fp=vfp, fn=vfn, tn=vtn),
            )
        )
    hist = np.sum([run.hist for run in runs], axis=0)
    traces = None
    if record_trace:
        traces = tuple(entry for run in runs for entry in run.trace)
    return ExecutionReport(
        strategy=strategy,
        per_video=tuple(per_video),
        masks={run.video_id: run.mask for run in runs},
        scores=MaskScores(tp=tp, fp=fp, fn=fn, tn=tn),
        config_histogram=hist,
        resolution_split=_resolution_split(table, hist),
        traces=traces,
    )


def _run_windowed_video(
    video: VideoStream,
    sim: ApfgSim,
    first_index: int,
    next_index: Callable[[object, int], int],
    cache: FeatureCache | None,
    record_trace: bool,
) -> _VideoRun:
    """Shared window-advance loop: next_index(output, current) picks the
    configuration of the following window."""
    table = sim.table
    mask = np.zeros(video.num_frames, dtype=bool)
    hist = np.zeros(len(table), dtype=np.int64)
    trace: list[dict] = []
    cost = 0.0
    invocations = 0
    idx = first_index
    start = 0
    while start < video.num_frames:
        out = sim.cached_invoke(video, start, idx, cache)
        s, e = out.window
        mask[s:e] = out.prediction
        hist[idx] += e - s
        cost += out.cost_seconds
        if record_trace:
            trace.append(
                {
                    "video": video.id,
                    "t": invocations,
                    "start": s,
                    "span": e - s,
                    "config": idx,
                    "prediction": bool(out.prediction),
                }
            )
        invocations += 1
        start = e
        if start < video.num_frames:
            idx = next_index(out, idx)
    return _VideoRun(video.id, video.num_frames, cost, invocations, mask, hist, trace)


def _greedy_policy(policy) -> Callable[[np.ndarray], int]:
    if isinstance(policy, QNetwork):
        return lambda state: int(np.argmax(policy.q_values(state)))
    if callable(policy):
        return lambda state: int(policy(state))
    raise TypeError("policy must be a QNetwork or a callable state -> index")


def run_rl(
    videos: Sequence[VideoStream],
    sim: ApfgSim,
    policy,
    *,
    initial_config_index: int | None = None,
    cache: FeatureCache | None = None,
    record_trace: bool = False,
) -> ExecutionReport:
    """Greedy learned policy; each video opens with the most accurate
    configuration (or an explicit initial_config_index)."""
    choose = _greedy_policy(policy)
    first = sim.table.most_accurate_index() if initial_config_index is None else initial_config_index
    runs = [
        _run_windowed_video(
            video, sim, first, lambda out, idx: choose(out.feature), cache, record_trace
        )
        for video in videos
    ]
    return _assemble("rl", sim.table, videos, runs, record_trace)


def run_sliding(
    videos: Sequence[VideoStream],
    sim: ApfgSim,
    config_index: int,
    *,
    cache: FeatureCache | None = None,
    record_trace: bool = False,
) -> ExecutionReport:
    """Fixed configuration tiled over every stream."""
    runs = [
        _run_windowed_video(
            video, sim, config_index, lambda out, idx: idx, cache, record_trace
        )
        for video in videos
    ]
    return _assemble("sliding", sim.table, videos, runs, record_trace)


def run_heuristic(
    videos: Sequence[VideoStream],
    sim: ApfgSim,
    *,
    patience: int = NO_ACTION_PATIENCE,
    cache: FeatureCache | None = None,
    record_trace: bool = False,
) -> ExecutionReport:
    """Rule-based baseline: action predictions jump to the slowest
    configuration, an action-to-no-action flip steps one rank faster, and
    `patience` consecutive no-action predictions jump to the fastest."""
    table = sim.table
    order = table.speed_order()  # slowest first
    rank_of = {idx: rank for rank, idx in enumerate(order)}

    def make_next():
        state = {"prev_action": False, "quiet": 0}

        def next_index(out, idx: int) -> int:
            if out.prediction:
                state["quiet"] = 0
                state["prev_action"] = True
                return order[0]
            state["quiet"] += 1
            flipped = state["prev_action"]
            state["prev_action"] = False
            if flipped:
                return order[min(rank_of[idx] + 1, len(order) - 1)]
            if state["quiet"] >= patience:
                return order[-1]
            return idx

        return next_index

    runs = [
        _run_windowed_video(
            video, sim, table.most_accurate_index(), make_next(), cache, record_trace
        )
        for video in videos
    ]
    return _assemble("heuristic", table, videos, runs, record_trace)


def default_frame_profile(
    table: ConfigTable, *, tpr: float = 0.7, tnr: float = 0.97
) -> CostProfile:
    """Per-frame classifier profile: FRAME_SPEED_RATIO times the throughput
    of the most accurate windowed configuration."""
    fps = table.profile(table.most_accurate_index()).throughput_fps
    return CostProfile(throughput_fps=FRAME_SPEED_RATIO * fps, tpr=tpr, tnr=tnr)


def run_frame_filter(
    videos: Sequence[VideoStream],
    sim: ApfgSim,
    frame_profile: CostProfile | None = None,
    *,
    record_trace: bool = False,
) -> ExecutionReport:
    """Per-frame classification baseline: one invocation per frame."""
    table = sim.table
    profile = frame_profile if frame_profile is not None else default_frame_profile(table)
    heavy = table.most_accurate_index()
    runs = []
    for video in videos:
        rng = np.random.Generator(
            np.random.Philox(
                np.random.SeedSequence([sim.seed, zlib.crc32(video.id.encode()), 0xF1A9])
            )
        )
        gt = video.mask()
        p_correct = np.where(gt, profile.tpr, profile.tnr)
        correct = rng.random(video.num_frames) < p_correct
        mask = np.where(correct, gt, ~gt)
        hist = np.zeros(len(table), dtype=np.int64)
        hist[heavy] = video.num_frames  # frames run through the heavy-grade model
        trace = []
        if record_trace:
            trace = [
                {
                    "video": video.id,
                    "t": i,
                    "start": i,
                    "span": 1,
                    "config": heavy,
                    "prediction": bool(mask[i]),
                }
                for i in range(video.num_frames)
            ]
        runs.append(
            _VideoRun(
                video.id,
                video.num_frames,
                video.num_frames / profile.throughput_fps,
                video.num_frames,
                mask,
                hist,
                trace,
            )
        )
    return _assemble("frame_filter", table, videos, runs, record_trace)


def run_segment_filter(
    videos: Sequence[VideoStream],
    sim: ApfgSim,
    filter_index: int,
    heavy_index: int,
    *,
    cache: FeatureCache | None = None,
    record_trace: bool = False,
) -> ExecutionReport:
    """Two-pass cascade: a cheap configuration tiles the stream and windows
    it flags as action are re-processed at the heavy configuration, whose
    prediction is final.  Cost counts both passes; the histogram assigns
    each frame to the configuration that produced its final bit."""
    table = sim.table
    heavy_cfg = table.config(heavy_index)
    heavy_prof = table.profile(heavy_index)
    runs = []
    for video in videos:
        mask = np.zeros(video.num_frames, dtype=bool)
        hist = np.zeros(len(table), dtype=np.int64)
        trace: list[dict] = []
        cost = 0.0
        invocations = 0
        start = 0
        while start < video.num_frames:
            out = sim.cached_invoke(video, start, filter_index, cache)
            s, e = out.window
            cost += out.cost_seconds
            invocations += 1
            final_idx = filter_index
            final_pred = False
            if out.prediction:
                pred2 = sim.predict_window(video, s, e, heavy_index)
                cost += invocation_time(heavy_cfg, heavy_prof) * (e - s) / heavy_cfg.span
                invocations += 1
                final_idx = heavy_index
                final_pred = pred2
            mask[s:e] = final_pred
            hist[final_idx] += e - s
            if record_trace:
                trace.append(
                    {
                        "video": video.id,
                        "t": invocations - 1,
                        "start": s,
                        "span": e - s,
                        "config": final_idx,
                        "prediction": bool(final_pred),
                    }
                )
            start = e
        runs.append(
            _VideoRun(video.id, video.num_frames, cost, invocations, mask, hist, trace)
        )
    return _assemble("segment_filter", table, videos, runs, record_trace)


def merge_reports(parts: Sequence[ExecutionReport]) -> ExecutionReport:
    """Combine reports of one strategy over disjoint video sets.

    Invocations depend only on (video, config, start), so running videos one
    at a time and merging reproduces the batch run exactly.  This is the
    deterministic-merge half of per-video parallel evaluation.
    """
    if not parts:
        raise ValueError("nothing to merge")
    strategy = parts[0].strategy
    if any(p.strategy != strategy for p in parts):
        raise ValueError("cannot merge reports of different strategies")
    per_video = tuple(v for p in parts for v in p.per_video)
    ids = [v.video_id for v in per_video]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate video ids across merged reports")
    masks: dict[str, np.ndarray] = {}
    for p in parts:
        masks.update(p.masks)
    scores = MaskScores(
        tp=sum(p.scores.tp for p in parts),
        fp=sum(p.scores.fp for p in parts),
        fn=sum(p.scores.fn for p in parts),
        tn=sum(p.scores.tn for p in parts),
    )
    hist = np.sum([p.config_histogram for p in parts], axis=0)
    split = {
        "lo": sum(p.resolution_split["lo"] for p in parts),
        "hi": sum(p.resolution_split["hi"] for p in parts),
    }
    traces = None
    if all(p.traces is not None for p in parts):
        traces = tuple(t for p in parts for t in p.traces)
    return ExecutionReport(
        strategy=strategy,
        per_video=per_video,
        masks=masks,
        scores=scores,
        config_histogram=hist,
        resolution_split=split,
        traces=traces,
    )


def compare(reports: Mapping[str, ExecutionReport], target_f1: float) -> list[dict]:
    """Comparison rows across strategies run on the same videos."""
    if not reports:
        raise ValueError("need at least one report to compare")
    id_sets = {name: set(r.video_ids) for name, r in reports.items()}
    first = next(iter(id_sets.values()))
    if any(ids != first for ids in id_sets.values()):
        raise ValueError("reports cover different video sets")
    base = reports.get("sliding")
    rows = []
    for name, report in reports.items():
        speedup = report.throughput_fps / base.throughput_fps if base else float("nan")
        rows.append(
            {
                "strategy": name,
                "throughput_fps": report.throughput_fps,
                "f1": report.f1,
                "meets_target": report.f1 >= target_f1,
                "speedup_vs_sliding": speedup,
                "f1_gap": abs(report.f1 - target_f1),
            }
        )
    return rows
