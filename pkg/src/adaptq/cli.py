"""Experiment harness: a single JSON spec drives dataset synthesis, training,
evaluation, target sweeps, and knob ablations.

Commands are pure functions of (spec, master seed): every artifact except the
wall-clock fields in the *_meta.json files is byte-reproducible.  CSV floats
are rendered with repr-grade precision so reruns compare equal.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .configs import (
    ConfigTable,
    Configuration,
    CostProfile,
    NoFeasibleConfig,
    estimate_cost_metrics,
    load_table,
    plan_sliding_config,
    restrict_table,
    table_from_json,
)
from .dqn import TrainParams, train_agent
from .executors import (
    FRAME_SPEED_RATIO,
    compare,
    merge_reports,
    run_frame_filter,
    run_heuristic,
    run_rl,
    run_segment_filter,
    run_sliding,
)
from .presets import DATASET_PRESETS, config_table_preset, dataset_preset
from .proxy import ApfgSim
from .qnet import load_checkpoint, save_checkpoint
from .rewards import RewardParams
from .streams import DatasetParams, load_dataset, save_dataset, synth_dataset

STRATEGIES = ("rl", "sliding", "heuristic", "frame_filter", "segment_filter")
SPLITS = ("train", "val", "eval")
# seed offsets keeping the three splits disjoint under one master seed
_SPLIT_OFFSET = {"train": 0, "val": 1000, "eval": 2000}
_DEFAULT_SPLIT_COUNTS = {"train": 8, "val": 4, "eval": 4}


@dataclass
class ExperimentSpec:
    seed: int
    out_dir: str
    dataset: dict
    config_table: dict = field(default_factory=lambda: {"preset": "reference"})
    rewards: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    sim: dict = field(default_factory=dict)
    strategies: tuple[str, ...] = STRATEGIES
    sweep_targets: tuple[float, ...] = (0.75, 0.80, 0.85)
    ablate_knobs: tuple[str, ...] = ("resolution", "segment_length", "sampling_rate")
    frame_filter: dict = field(default_factory=dict)
    segment_filter: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def __post_init__(self) -> None:
        unknown = set(self.strategies) - set(STRATEGIES)
        if unknown:
            raise ValueError(f"unknown strategies: {sorted(unknown)}")
        preset = self.dataset.get("preset")
        if preset is not None and preset not in DATASET_PRESETS:
            raise ValueError(f"unknown dataset preset {preset!r}")

    @classmethod
    def from_file(
        cls,
        path: str | Path,
        seed_override: int | None = None,
        out_override: str | None = None,
    ) -> "ExperimentSpec":
        path = Path(path)
        raw = json.loads(path.read_text())
        known = {
            "seed", "out_dir", "dataset", "config_table", "rewards", "train",
            "sim", "strategies", "sweep_targets", "ablate_knobs",
            "frame_filter", "segment_filter",
        }
        extra = set(raw) - known
        if extra:
            raise ValueError(f"unknown spec fields: {sorted(extra)}")
        if seed_override is not None:
            raw["seed"] = seed_override
        if out_override is not None:
            raw["out_dir"] = out_override
        if "seed" not in raw:
            raise ValueError("spec needs a seed (or pass --seed)")
        if "out_dir" not in raw:
            raise ValueError("spec needs an out_dir (or pass --out)")
        if "dataset" not in raw:
            raise ValueError("spec needs a dataset section")
        for tup in ("strategies", "sweep_targets", "ablate_knobs"):
            if tup in raw:
                raw[tup] = tuple(raw[tup])
        return cls(base_dir=path.parent, **raw)


# --------------------------------------------------------------------------
# spec-derived builders

def split_params(spec: ExperimentSpec, split: str) -> DatasetParams:
    ds = spec.dataset
    seed = spec.seed + _SPLIT_OFFSET[split]
    count = ds.get(f"{split}_videos", _DEFAULT_SPLIT_COUNTS[split])
    if "preset" in ds:
        return dataset_preset(
            ds["preset"],
            num_videos=count,
            frames_per_video=ds.get("frames_per_video"),
            seed=seed,
        )
    params = dict(ds["params"])
    params["num_videos"] = count
    params["seed"] = seed
    return DatasetParams(**params)


def split_videos(spec: ExperimentSpec, split: str):
    path = spec.dataset.get(f"{split}_path")
    if path is not None:
        return load_dataset(spec.base_dir / path)
    return synth_dataset(split_params(spec, split))


def build_table(spec: ExperimentSpec) -> ConfigTable:
    ct = spec.config_table
    beta = ct.get("beta")
    if "preset" in ct:
        return config_table_preset(ct["preset"], beta=beta)
    if "path" in ct:
        return load_table(spec.base_dir / ct["path"])
    return table_from_json({"entries": ct["entries"], "beta": beta})


def build_sim(spec: ExperimentSpec, table: ConfigTable) -> ApfgSim:
    sim = spec.sim
    return ApfgSim(
        table,
        feature_dim=sim.get("feature_dim", 32),
        noise_scale=sim.get("noise_scale", 0.3),
        lookahead_horizon=sim.get("lookahead_horizon", 64),
        seed=sim.get("seed", spec.seed),
    )


def reward_params(spec: ExperimentSpec, table: ConfigTable, **overrides) -> RewardParams:
    kw = dict(spec.rewards)
    kw.update(overrides)
    kw.setdefault("beta", table.beta)
    kw.setdefault("target_accuracy", 0.85)
    return RewardParams(**kw)


def train_params(spec: ExperimentSpec) -> TrainParams:
    kw = dict(spec.train)
    kw.setdefault("episodes", 48)
    kw.setdefault("seed", spec.seed)
    return TrainParams(**kw)


# --------------------------------------------------------------------------
# deterministic writers

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.10g}"
    if value is None:
        return ""
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in header])


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_ndjson(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


# --------------------------------------------------------------------------
# evaluation engine

def _frame_profile(spec: ExperimentSpec, table: ConfigTable) -> CostProfile:
    ff = spec.frame_filter
    base = table.profile(table.most_accurate_index()).throughput_fps
    return CostProfile(
        throughput_fps=ff.get("fps_ratio", FRAME_SPEED_RATIO) * base,
        tpr=ff.get("tpr", 0.7),
        tnr=ff.get("tnr", 0.97),
    )


def _segment_indices(spec: ExperimentSpec, table: ConfigTable) -> tuple[int, int]:
    sf = spec.segment_filter
    fidx = sf.get("filter_index", table.fastest_index())
    hidx = sf.get("heavy_index", table.most_accurate_index())
    return fidx, hidx


def _strategy_report(name, videos, sim, *, net, plan_index, spec, record_trace=False):
    if name == "rl":
        return run_rl(videos, sim, net, record_trace=record_trace)
    if name == "sliding":
        return run_sliding(videos, sim, plan_index, record_trace=record_trace)
    if name == "heuristic":
        return run_heuristic(videos, sim, record_trace=record_trace)
    if name == "frame_filter":
        profile = _frame_profile(spec, sim.table)
        return run_frame_filter(videos, sim, profile, record_trace=record_trace)
    if name == "segment_filter":
        fidx, hidx = _segment_indices(spec, sim.table)
        return run_segment_filter(videos, sim, fidx, hidx, record_trace=record_trace)
    raise ValueError(f"unknown strategy {name!r}")


def _eval_video_job(args):
    name, video, sim, net, plan_index, spec, record_trace = args
    return _strategy_report(
        name, [video], sim, net=net, plan_index=plan_index, spec=spec,
        record_trace=record_trace,
    )


def evaluate_strategies(
    spec: ExperimentSpec,
    videos,
    sim: ApfgSim,
    net,
    plan_index: int,
    parallel: int = 1,
    record_trace: bool = True,
) -> dict:
    """One report per requested strategy; each video runs as its own job and
    the parts merge, so serial and parallel runs emit identical bytes."""
    jobs = [
        (name, video, sim, net, plan_index, spec, record_trace)
        for name in spec.strategies
        for video in videos
    ]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            parts = list(pool.map(_eval_video_job, jobs))
    else:
        parts = [_eval_video_job(job) for job in jobs]
    reports = {}
    n = len(videos)
    for i, name in enumerate(spec.strategies):
        reports[name] = merge_reports(parts[i * n : (i + 1) * n])
    return reports


def _plan_index(table: ConfigTable, target: float) -> tuple[int, bool]:
    """Planned sliding config index; falls back to the most accurate entry
    when no configuration reaches the target."""
    try:
        return table.index_of(plan_sliding_config(table, target)), True
    except NoFeasibleConfig:
        _warn(
            f"no configuration reaches f1 {target}; "
            "sliding baseline falls back to the most accurate entry"
        )
        return table.most_accurate_index(), False


def report_rows(reports: dict) -> list[dict]:
    rows = []
    for name, rep in reports.items():
        for pv in rep.per_video:
            rows.append(
                {
                    "strategy": name,
                    "video": pv.video_id,
                    "frames": pv.frames,
                    "cost_seconds": pv.cost_seconds,
                    "invocations": pv.invocations,
                    "throughput_fps": pv.throughput_fps,
                    "tp": pv.scores.tp,
                    "fp": pv.scores.fp,
                    "fn": pv.scores.fn,
                    "tn": pv.scores.tn,
                    "precision": pv.scores.precision,
                    "recall": pv.scores.recall,
                    "f1": pv.scores.f1,
                }
            )
        rows.append(
            {
                "strategy": name,
                "video": "ALL",
                "frames": rep.frames_covered,
                "cost_seconds": rep.total_cost_seconds,
                "invocations": rep.invocations,
                "throughput_fps": rep.throughput_fps,
                "tp": rep.scores.tp,
                "fp": rep.scores.fp,
                "fn": rep.scores.fn,
                "tn": rep.scores.tn,
                "precision": rep.precision,
                "recall": rep.recall,
                "f1": rep.f1,
                "config_histogram": "|".join(str(int(v)) for v in rep.config_histogram),
                "resolution_lo": rep.resolution_split["lo"],
                "resolution_hi": rep.resolution_split["hi"],
            }
        )
    return rows


_REPORT_HEADER = [
    "strategy", "video", "frames", "cost_seconds", "invocations",
    "throughput_fps", "tp", "fp", "fn", "tn", "precision", "recall", "f1",
    "config_histogram", "resolution_lo", "resolution_hi",
]
_COMPARISON_HEADER = [
    "strategy", "throughput_fps", "f1", "meets_target",
    "speedup_vs_sliding", "f1_gap",
]


# --------------------------------------------------------------------------
# commands

def cmd_synth(spec: ExperimentSpec, out: Path) -> None:
    t0 = time.perf_counter()
    stats = {}
    for split in SPLITS:
        videos = split_videos(spec, split)
        save_dataset(videos, out / f"{split}.json")
        frames = sum(v.num_frames for v in videos)
        action = sum(v.action_frames() for v in videos)
        stats[split] = {
            "videos": len(videos),
            "frames": frames,
            "instances": sum(len(v.instances) for v in videos),
            "action_fraction": action / frames,
        }
        print(
            f"{split}: {stats[split]['videos']} videos, {frames} frames, "
            f"{stats[split]['instances']} instances, "
            f"action fraction {stats[split]['action_fraction']:.4f}"
        )
    stats["wall_clock_seconds"] = time.perf_counter() - t0
    write_json(out / "synth_meta.json", stats)


def cmd_train(spec: ExperimentSpec, out: Path) -> None:
    t0 = time.perf_counter()
    table = build_table(spec)
    sim = build_sim(spec, table)
    videos = split_videos(spec, "train")
    rp = reward_params(spec, table)
    tp = train_params(spec)
    net, log = train_agent(videos, sim, rp, tp)
    save_checkpoint(
        net,
        out / "checkpoint.bin",
        meta={
            "mode": rp.mode,
            "target_accuracy": rp.target_accuracy,
            "episodes": tp.episodes,
            "num_configs": len(table),
        },
    )
    write_csv(
        out / "training_log.csv",
        ["episode", "mean_loss", "mean_reward", "epsilon"],
        [
            {
                "episode": e.episode,
                "mean_loss": e.mean_loss,
                "mean_reward": e.mean_reward,
                "epsilon": e.epsilon,
            }
            for e in log
        ],
    )
    wall = time.perf_counter() - t0
    write_json(out / "train_meta.json", {"wall_clock_seconds": wall, "episodes": tp.episodes})
    print(f"trained {tp.episodes} episodes in {wall:.1f}s -> {out / 'checkpoint.bin'}")


def cmd_eval(spec: ExperimentSpec, out: Path, parallel: int = 1) -> None:
    t0 = time.perf_counter()
    table = build_table(spec)
    sim = build_sim(spec, table)
    val = split_videos(spec, "val")
    table = estimate_cost_metrics(val, sim)
    rp = reward_params(spec, table)
    plan_idx, feasible = _plan_index(table, rp.target_accuracy)

    net = None
    if "rl" in spec.strategies:
        net, meta = load_checkpoint(out / "checkpoint.bin")
        if net.layer_sizes[0] != sim.feature_dim or net.layer_sizes[-1] != len(table):
            raise ValueError(
                f"checkpoint shaped {net.layer_sizes} does not match "
                f"feature_dim {sim.feature_dim} / {len(table)} configs"
            )
    videos = split_videos(spec, "eval")
    reports = evaluate_strategies(spec, videos, sim, net, plan_idx, parallel)

    write_csv(out / "report.csv", _REPORT_HEADER, report_rows(reports))
    rows = compare(reports, rp.target_accuracy)
    write_csv(out / "comparison.csv", _COMPARISON_HEADER, rows)
    write_ndjson(
        out / "trace.ndjson",
        (
            {"strategy": name, **entry}
            for name in spec.strategies
            for entry in (reports[name].traces or ())
        ),
    )
    write_json(
        out / "eval_meta.json",
        {
            "wall_clock_seconds": time.perf_counter() - t0,
            "planned_config": list(
                (lambda c: (c.resolution, c.segment_length, c.sampling_rate))(
                    table.config(plan_idx)
                )
            ),
            "plan_feasible": feasible,
            "validation_f1": [table.profile(i).f1_validation for i in range(len(table))],
        },
    )
    for row in rows:
        print(
            f"{row['strategy']:>15s}: f1 {row['f1']:.4f} "
            f"fps {row['throughput_fps']:9.1f} speedup {row['speedup_vs_sliding']:.2f}x"
        )


def cmd_sweep(spec: ExperimentSpec, out: Path, parallel: int = 1) -> None:
    t0 = time.perf_counter()
    base_table = build_table(spec)
    train_videos = split_videos(spec, "train")
    eval_videos = split_videos(spec, "eval")
    val_videos = split_videos(spec, "val")
    tp = train_params(spec)
    rows = []
    for target in spec.sweep_targets:
        sim = build_sim(spec, base_table)
        table = estimate_cost_metrics(val_videos, sim)
        rp = reward_params(spec, table, target_accuracy=target)
        net, _ = train_agent(train_videos, sim, rp, tp)
        save_checkpoint(net, out / f"checkpoint_t{int(round(target * 100))}.bin")
        plan_idx, _ = _plan_index(table, target)
        reports = evaluate_strategies(
            spec, eval_videos, sim, net, plan_idx, parallel, record_trace=False
        )
        for row in compare(reports, target):
            rows.append({"target": target, **row})
    write_csv(out / "sweep.csv", ["target"] + _COMPARISON_HEADER, rows)
    write_json(out / "sweep_meta.json", {"wall_clock_seconds": time.perf_counter() - t0})
    for row in rows:
        print(
            f"target {row['target']:.2f} {row['strategy']:>15s}: "
            f"f1 {row['f1']:.4f} fps {row['throughput_fps']:9.1f}"
        )


def cmd_ablate(spec: ExperimentSpec, out: Path, parallel: int = 1) -> None:
    t0 = time.perf_counter()
    full = build_table(spec)
    accurate = full.config(full.most_accurate_index())
    train_videos = split_videos(spec, "train")
    eval_videos = split_videos(spec, "eval")
    tp = train_params(spec)

    def rl_outcome(table: ConfigTable) -> tuple[float, float]:
        sim = build_sim(spec, table)
        # beta forced to the uniform cutoff matching the (sub-)table size
        rp = reward_params(spec, table, beta=table.beta)
        net, _ = train_agent(train_videos, sim, rp, tp)
        rep = run_rl(eval_videos, sim, net)
        return rep.throughput_fps, rep.f1

    rows = []
    base_fps, base_f1 = rl_outcome(full)
    rows.append(
        {
            "knob": "none",
            "fixed_value": None,
            "num_configs": len(full),
            "throughput_fps": base_fps,
            "f1": base_f1,
            "drop_vs_baseline": 0.0,
        }
    )
    for knob in spec.ablate_knobs:
        value = getattr(accurate, knob)
        sub = restrict_table(full, knob, value)
        fps, f1 = rl_outcome(sub)
        rows.append(
            {
                "knob": knob,
                "fixed_value": value,
                "num_configs": len(sub),
                "throughput_fps": fps,
                "f1": f1,
                "drop_vs_baseline": (base_fps - fps) / base_fps,
            }
        )
    write_csv(
        out / "ablation.csv",
        ["knob", "fixed_value", "num_configs", "throughput_fps", "f1", "drop_vs_baseline"],
        rows,
    )
    write_json(out / "ablate_meta.json", {"wall_clock_seconds": time.perf_counter() - t0})
    for row in rows:
        print(
            f"{row['knob']:>15s}: fps {row['throughput_fps']:9.1f} "
            f"f1 {row['f1']:.4f} drop {row['drop_vs_baseline']:.1%}"
        )


def cmd_compare(spec: ExperimentSpec, out: Path) -> None:
    """Rebuild the comparison table from an existing report.csv."""
    path = out / "report.csv"
    target = reward_params(spec, build_table(spec)).target_accuracy
    with open(path, newline="", encoding="utf-8") as fh:
        aggregate = [row for row in csv.DictReader(fh) if row["video"] == "ALL"]
    if not aggregate:
        raise ValueError(f"{path} holds no aggregate rows")
    base = next(
        (float(r["throughput_fps"]) for r in aggregate if r["strategy"] == "sliding"),
        None,
    )
    rows = []
    for r in aggregate:
        fps, f1 = float(r["throughput_fps"]), float(r["f1"])
        rows.append(
            {
                "strategy": r["strategy"],
                "throughput_fps": fps,
                "f1": f1,
                "meets_target": f1 >= target,
                "speedup_vs_sliding": fps / base if base else float("nan"),
                "f1_gap": abs(f1 - target),
            }
        )
    write_csv(out / "comparison.csv", _COMPARISON_HEADER, rows)
    for row in rows:
        print(
            f"{row['strategy']:>15s}: f1 {row['f1']:.4f} "
            f"fps {row['throughput_fps']:9.1f} speedup {row['speedup_vs_sliding']:.2f}x"
        )


# --------------------------------------------------------------------------

def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="adaptq", description="adaptive stream-query experiment harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("synth", "train", "eval", "sweep", "ablate", "compare"):
        p = sub.add_parser(name)
        p.add_argument("--spec", required=True, help="experiment spec JSON")
        p.add_argument("--out", default=None, help="output directory (overrides spec)")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides spec)")
        p.add_argument("--parallel", type=int, default=1, help="per-video eval workers")
    args = parser.parse_args(argv)

    spec = ExperimentSpec.from_file(args.spec, seed_override=args.seed, out_override=args.out)
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if args.command == "synth":
        cmd_synth(spec, out)
    elif args.command == "train":
        cmd_train(spec, out)
    elif args.command == "eval":
        cmd_eval(spec, out, args.parallel)
    elif args.command == "sweep":
        cmd_sweep(spec, out, args.parallel)
    elif args.command == "ablate":
        cmd_ablate(spec, out, args.parallel)
    elif args.command == "compare":
        cmd_compare(spec, out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
