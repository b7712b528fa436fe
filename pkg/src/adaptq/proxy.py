"""Deterministic simulator of a window-level action classifier.

Each invocation covers one window [start, start + span) of a stream and
yields a feature vector, a binary prediction, and a simulated cost.  All
randomness is keyed on (seed, video, config, start), so outputs are pure
functions of those values: cached and direct paths agree bit for bit and
per-video evaluation can run in any order.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .configs import ConfigTable, invocation_time
from .streams import VideoStream, window_label


@dataclass(frozen=True)
class ApfgOutput:
    """Result of one simulated classifier invocation."""

    feature: np.ndarray
    prediction: bool
    cost_seconds: float
    window: tuple[int, int]


class FeatureCache:
    """Precomputed ApfgOutput store keyed by (video_id, config_index, start)."""

    def __init__(self) -> None:
        self._data: dict[tuple[str, int, int], ApfgOutput] = {}

    def __len__(self) -> int:
        return len(self._data)

    def put(self, video_id: str, config_index: int, start: int, out: ApfgOutput) -> None:
        self._data[(video_id, config_index, start)] = out

    def get(self, video_id: str, config_index: int, start: int) -> ApfgOutput | None:
        return self._data.get((video_id, config_index, start))

    def items(self):
        return self._data.items()


class ApfgSim:
    """Feature/prediction simulator bound to a config table.

    Feature layout: ch0 noisy in-window action fraction, ch1 noisy action
    fraction over the next lookahead_horizon frames, ch2 normalized start
    position, ch3 normalized config index, remaining channels pure noise.
    Noise std is noise_scale * (1 - (tpr + tnr) / 2): perfect profiles see
    exact features.
    """

    def __init__(
        self,
        table: ConfigTable,
        *,
        feature_dim: int = 32,
        noise_scale: float = 0.3,
        lookahead_horizon: int = 64,
        seed: int = 0,
    ) -> None:
        if feature_dim < 4:
            raise ValueError("feature_dim must be at least 4")
        if noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")
        if lookahead_horizon <= 0:
            raise ValueError("lookahead_horizon must be positive")
        self.table = table
        self.feature_dim = feature_dim
        self.noise_scale = noise_scale
        self.lookahead_horizon = lookahead_horizon
        self.seed = seed
        self._cumsums: dict[str, tuple[VideoStream, np.ndarray]] = {}

    def _cumsum(self, video: VideoStream) -> np.ndarray:
        hit = self._cumsums.get(video.id)
        if hit is not None:
            seen, cs = hit
            # ids key both this cache and the feature RNG streams, so a
            # second distinct video under the same id would silently reuse
            # the first one's ground truth
            if seen is not video and seen != video:
                raise ValueError(
                    f"video id {video.id!r} already bound to a different stream; "
                    "give each video a unique id"
                )
            return cs
        cs = np.concatenate([[0], np.cumsum(video.mask(), dtype=np.int64)])
        self._cumsums[video.id] = (video, cs)
        return cs

    def fraction(self, video: VideoStream, start: int, end: int) -> float:
        """Exact action-frame fraction of [start, end); 0 for empty ranges."""
        if end <= start:
            return 0.0
        cs = self._cumsum(video)
        return float(cs[end] - cs[start]) / (end - start)

    def _rng(self, video_id: str, config_index: int, start: int) -> np.random.Generator:
        key = np.random.SeedSequence(
            [self.seed, zlib.crc32(video_id.encode()), config_index, start]
        )
        return np.random.Generator(np.random.Philox(key))

    def invoke(self, video: VideoStream, start: int, config_index: int) -> ApfgOutput:
        if not 0 <= config_index < len(self.table):
            raise IndexError(f"config index {config_index} outside table")
        if not 0 <= start < video.num_frames:
            raise ValueError(f"start {start} outside [0, {video.num_frames})")
        config = self.table.config(config_index)
        profile = self.table.profile(config_index)
        end = min(start + config.span, video.num_frames)

        truth = window_label(video, start, end)
        rng = self._rng(video.id, config_index, start)
        p_correct = profile.tpr if truth else profile.tnr
        prediction = truth if rng.random() < p_correct else not truth

        sigma = self.noise_scale * (1.0 - (profile.tpr + profile.tnr) / 2.0)
        noise = rng.standard_normal(self.feature_dim)
        feature = sigma * noise
        look_end = min(end + self.lookahead_horizon, video.num_frames)
        feature[0] += self.fraction(video, start, end)
        feature[1] += self.fraction(video, end, look_end)
        feature[2] = start / video.num_frames
        feature[3] = config_index / len(self.table)

        cost = invocation_time(config, profile) * (end - start) / config.span
        return ApfgOutput(feature=feature, prediction=prediction, cost_seconds=cost, window=(start, end))

    def predict_window(self, video: VideoStream, start: int, end: int, config_index: int) -> bool:
        """Binary prediction over an arbitrary extent at a config's accuracy.

        Uses the same keyed stream as invoke(), so re-judging a window a
        second pass is deterministic.
        """
        profile = self.table.profile(config_index)
        truth = window_label(video, start, end)
        rng = self._rng(video.id, config_index, start)
        p_correct = profile.tpr if truth else profile.tnr
        return truth if rng.random() < p_correct else not truth

    def cached_invoke(
        self, video: VideoStream, start: int, config_index: int, cache: FeatureCache | None
    ) -> ApfgOutput:
        if cache is not None:
            hit = cache.get(video.id, config_index, start)
            if hit is not None:
                return hit
        return self.invoke(video, start, config_index)


def reachable_starts(video: VideoStream, spans: Sequence[int]) -> list[int]:
    """Window starts reachable from frame 0 by chaining any config spans."""
    seen = {0}
    frontier = [0]
    while frontier:
        s = frontier.pop()
        for span in spans:
            e = min(s + span, video.num_frames)
            if e < video.num_frames and e not in seen:
                seen.add(e)
                frontier.append(e)
    return sorted(seen)


def precompute_features(
    sim: ApfgSim,
    videos: Iterable[VideoStream],
    config_indices: Sequence[int] | None = None,
) -> FeatureCache:
    """Invoke every (video, config, reachable start) once into a cache."""
    indices = list(range(len(sim.table))) if config_indices is None else list(config_indices)
    spans = [sim.table.config(i).span for i in indices]
    cache = FeatureCache()
    for video in videos:
        for start in reachable_starts(video, spans):
            for idx in indices:
                cache.put(video.id, idx, start, sim.invoke(video, start, idx))
    return cache


def dump_cache(cache: FeatureCache, path: str | Path) -> None:
    """Write the cache as a JSON index plus a little-endian f32 feature blob.

    Features are narrowed to f32 in the file; a reloaded cache is therefore
    not bit-identical to a freshly computed one.
    """
    index = []
    blobs = []
    for ordinal, ((vid, idx, start), out) in enumerate(sorted(cache.items())):
        index.append(
            {
                "video": vid,
                "config": idx,
                "start": start,
                "prediction": bool(out.prediction),
                "cost": out.cost_seconds,
                "window": list(out.window),
                "offset": ordinal,
            }
        )
        blobs.append(np.asarray(out.feature, dtype="<f4").tobytes())
    dim = len(blobs[0]) // 4 if blobs else 0
    header = json.dumps({"feature_dim": dim, "entries": index}).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(b"".join(blobs))


def load_cache(path: str | Path) -> FeatureCache:
    raw = Path(path).read_bytes()
    (hlen,) = struct.unpack_from("<I", raw, 0)
    header = json.loads(raw[4 : 4 + hlen].decode())
    dim = header["feature_dim"]
    body = raw[4 + hlen :]
    cache = FeatureCache()
    for entry in header["entries"]:
        off = entry["offset"] * dim * 4
        feature = np.frombuffer(body[off : off + dim * 4], dtype="<f4").astype(np.float64)
        cache.put(
            entry["video"],
            entry["config"],
            entry["start"],
            ApfgOutput(
                feature=feature,
                prediction=entry["prediction"],
                cost_seconds=entry["cost"],
                window=tuple(entry["window"]),
            ),
        )
    return cache
