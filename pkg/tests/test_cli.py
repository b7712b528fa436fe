"""Harness tests: spec parsing, deterministic writers, and the command
pipeline end to end on a miniature synthetic dataset."""

import csv
import hashlib
import json
from types import SimpleNamespace

import pytest

from adaptq.cli import (
    ExperimentSpec,
    _fmt,
    _plan_index,
    build_table,
    main,
    split_params,
    split_videos,
)
from adaptq.presets import reference_table
from adaptq.streams import load_dataset


MICRO_DATASET = {
    "params": {
        "frames_per_video": 512,
        "action_fraction": 0.3,
        "mean_action_len": 48,
        "std_action_len": 16,
        "min_action_len": 8,
        "max_action_len": 96,
    },
    "train_videos": 2,
    "val_videos": 2,
    "eval_videos": 2,
}


def micro_spec(out_dir, **extra):
    spec = {
        "seed": 11,
        "out_dir": str(out_dir),
        "dataset": dict(MICRO_DATASET),
        "config_table": {"preset": "reference"},
        "rewards": {"beta": 0.25, "target_accuracy": 0.85, "mode": "local"},
        "train": {
            "episodes": 2,
            "batch_size": 32,
            "warmup": 64,
            "buffer_capacity": 2048,
            "hidden": [16, 16],
        },
        "sim": {"noise_scale": 0.2},
    }
    spec.update(extra)
    return spec


def write_spec(path, spec):
    path.write_text(json.dumps(spec, indent=2))
    return str(path)


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ------------------------------------------------------------- spec parsing


def test_from_file_rejects_unknown_fields(tmp_path):
    spec = micro_spec(tmp_path / "run")
    spec["bogus"] = 1
    path = write_spec(tmp_path / "spec.json", spec)
    with pytest.raises(ValueError, match="bogus"):
        ExperimentSpec.from_file(path)


@pytest.mark.parametrize("missing", ["seed", "out_dir", "dataset"])
def test_from_file_requires_core_fields(tmp_path, missing):
    spec = micro_spec(tmp_path / "run")
    del spec[missing]
    path = write_spec(tmp_path / "spec.json", spec)
    with pytest.raises(ValueError, match=missing.split("_")[0]):
        ExperimentSpec.from_file(path)


def test_from_file_overrides_and_tuples(tmp_path):
    spec = micro_spec(tmp_path / "run", strategies=["rl", "sliding"])
    path = write_spec(tmp_path / "spec.json", spec)
    parsed = ExperimentSpec.from_file(path, seed_override=99, out_override="elsewhere")
    assert parsed.seed == 99
    assert parsed.out_dir == "elsewhere"
    assert parsed.strategies == ("rl", "sliding")
    assert parsed.base_dir == tmp_path


def test_spec_validation():
    with pytest.raises(ValueError, match="strategies"):
        ExperimentSpec(seed=0, out_dir="x", dataset={}, strategies=("bogus",))
    with pytest.raises(ValueError, match="preset"):
        ExperimentSpec(seed=0, out_dir="x", dataset={"preset": "nope"})


def test_split_seeds_and_disjoint_ids(tmp_path):
    spec = ExperimentSpec(seed=7, out_dir="x", dataset=dict(MICRO_DATASET))
    assert split_params(spec, "train").seed == 7
    assert split_params(spec, "val").seed == 1007
    assert split_params(spec, "eval").seed == 2007
    ids = {}
    for split in ("train", "val", "eval"):
        ids[split] = {v.id for v in split_videos(spec, split)}
    assert not (ids["train"] & ids["val"])
    assert not (ids["train"] & ids["eval"])
    assert not (ids["val"] & ids["eval"])


def test_build_table_from_entries_and_path(tmp_path):
    entries = [
        {"r": 100, "l": 4, "s": 4, "fps": 900.0, "tpr": 0.9, "tnr": 0.99},
        {"r": 300, "l": 4, "s": 2, "fps": 90.0, "tpr": 0.95, "tnr": 0.995, "f1": 0.97},
    ]
    spec = ExperimentSpec(
        seed=0, out_dir="x", dataset={}, config_table={"entries": entries, "beta": 0.5}
    )
    table = build_table(spec)
    assert len(table) == 2
    assert table.beta == 0.5
    assert table.profile(1).f1_validation == 0.97

    path = tmp_path / "table.json"
    path.write_text(json.dumps({"entries": entries, "beta": 0.5}) + "\n")
    spec2 = ExperimentSpec(
        seed=0, out_dir="x", dataset={}, config_table={"path": "table.json"},
        base_dir=tmp_path,
    )
    loaded = build_table(spec2)
    assert len(loaded) == 2
    assert loaded.beta == 0.5


def test_dataset_path_roundtrip(tmp_path):
    spec = ExperimentSpec(seed=3, out_dir="x", dataset=dict(MICRO_DATASET))
    videos = split_videos(spec, "train")
    from adaptq.streams import save_dataset

    save_dataset(videos, tmp_path / "train.json")
    spec2 = ExperimentSpec(
        seed=3, out_dir="x",
        dataset={**MICRO_DATASET, "train_path": "train.json"},
        base_dir=tmp_path,
    )
    reloaded = split_videos(spec2, "train")
    assert [v.id for v in reloaded] == [v.id for v in videos]


# ------------------------------------------------------------------ helpers


def test_fmt():
    assert _fmt(True) == "true"
    assert _fmt(False) == "false"
    assert _fmt(None) == ""
    assert _fmt(0.25) == "0.25"
    assert _fmt(1.0 / 3.0) == "0.3333333333"
    assert _fmt(7) == "7"
    assert _fmt("rl") == "rl"


def test_plan_index_feasible_and_fallback(capsys):
    table = reference_table().with_f1([0.9915, 0.9835, 0.9925, 0.9945])
    idx, feasible = _plan_index(table, 0.85)
    assert (idx, feasible) == (0, True)  # fastest entry clears the bar
    idx, feasible = _plan_index(table, 0.999)
    assert (idx, feasible) == (3, False)  # most accurate entry, flagged
    assert "warning:" in capsys.readouterr().err


# ------------------------------------------------------------- the pipeline


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> train -> eval, then rerun and parallel-rerun for identity."""
    root = tmp_path_factory.mktemp("cli")
    out = root / "run"
    spec_path = root / "spec.json"
    write_spec(spec_path, micro_spec(out))
    argv = ["--spec", str(spec_path)]

    assert main(["synth", *argv]) == 0
    assert main(["train", *argv]) == 0
    assert main(["eval", *argv]) == 0
    tracked = ["checkpoint.bin", "training_log.csv", "report.csv",
               "comparison.csv", "trace.ndjson"]
    first = {name: sha(out / name) for name in tracked}

    assert main(["train", *argv]) == 0
    assert main(["eval", *argv]) == 0
    second = {name: sha(out / name) for name in tracked}

    assert main(["eval", *argv, "--parallel", "2"]) == 0
    parallel = {name: sha(out / name) for name in tracked}

    return SimpleNamespace(
        root=root, out=out, spec_path=spec_path,
        first=first, second=second, parallel=parallel,
    )


def test_synth_artifacts(pipeline):
    for split in ("train", "val", "eval"):
        videos = load_dataset(pipeline.out / f"{split}.json")
        assert len(videos) == 2
        assert all(v.num_frames == 512 for v in videos)
    meta = json.loads((pipeline.out / "synth_meta.json").read_text())
    # synthesis promises the requested fraction within 20 percent relative
    for split in ("train", "val", "eval"):
        assert meta[split]["action_fraction"] == pytest.approx(0.3, rel=0.2)
    assert meta["wall_clock_seconds"] > 0


def test_train_artifacts(pipeline):
    log_rows = list(csv.DictReader(open(pipeline.out / "training_log.csv")))
    assert len(log_rows) == 2
    assert [r["episode"] for r in log_rows] == ["0", "1"]
    for r in log_rows:
        assert 0.05 <= float(r["epsilon"]) <= 1.0
    meta = json.loads((pipeline.out / "train_meta.json").read_text())
    assert meta["episodes"] == 2


def test_eval_artifacts(pipeline):
    rows = list(csv.DictReader(open(pipeline.out / "report.csv")))
    agg = {r["strategy"]: r for r in rows if r["video"] == "ALL"}
    assert set(agg) == {"rl", "sliding", "heuristic", "frame_filter", "segment_filter"}
    for r in agg.values():
        assert int(r["frames"]) == 1024
        assert 0.0 <= float(r["f1"]) <= 1.0
        assert float(r["throughput_fps"]) > 0
        hist = [int(v) for v in r["config_histogram"].split("|")]
        assert sum(hist) == 1024
    per_video = [r for r in rows if r["video"] != "ALL"]
    assert len(per_video) == 10  # 5 strategies x 2 videos

    comp = list(csv.DictReader(open(pipeline.out / "comparison.csv")))
    assert [r["strategy"] for r in comp] == list(agg)
    sliding = next(r for r in comp if r["strategy"] == "sliding")
    assert float(sliding["speedup_vs_sliding"]) == pytest.approx(1.0)

    traces = [json.loads(line) for line in open(pipeline.out / "trace.ndjson")]
    assert traces and all("strategy" in t and "config" in t for t in traces)

    meta = json.loads((pipeline.out / "eval_meta.json").read_text())
    assert len(meta["planned_config"]) == 3
    assert len(meta["validation_f1"]) == 4


def test_rerun_byte_identity(pipeline):
    assert pipeline.first == pipeline.second


def test_parallel_byte_identity(pipeline):
    assert pipeline.parallel == pipeline.first


def test_compare_rebuild(pipeline, capsys):
    before = list(csv.DictReader(open(pipeline.out / "comparison.csv")))
    assert main(["compare", "--spec", str(pipeline.spec_path)]) == 0
    capsys.readouterr()
    after = list(csv.DictReader(open(pipeline.out / "comparison.csv")))
    assert [r["strategy"] for r in after] == [r["strategy"] for r in before]
    for b, a in zip(before, after):
        assert float(a["f1"]) == pytest.approx(float(b["f1"]))
        assert float(a["speedup_vs_sliding"]) == pytest.approx(
            float(b["speedup_vs_sliding"])
        )
        assert a["meets_target"] == b["meets_target"]


def test_eval_without_rl_needs_no_checkpoint(pipeline):
    out = pipeline.root / "norl"
    spec_path = pipeline.root / "norl_spec.json"
    write_spec(spec_path, micro_spec(out, strategies=["sliding", "heuristic"]))
    assert main(["eval", "--spec", str(spec_path)]) == 0
    rows = list(csv.DictReader(open(out / "report.csv")))
    assert {r["strategy"] for r in rows} == {"sliding", "heuristic"}


def test_eval_rejects_mismatched_checkpoint(pipeline):
    spec_path = pipeline.root / "mismatch_spec.json"
    write_spec(
        spec_path,
        micro_spec(pipeline.out, sim={"noise_scale": 0.2, "feature_dim": 16}),
    )
    with pytest.raises(ValueError, match="does not match"):
        main(["eval", "--spec", str(spec_path)])


def test_sweep_micro(tmp_path):
    out = tmp_path / "sweep"
    spec_path = tmp_path / "spec.json"
    write_spec(
        spec_path,
        micro_spec(out, sweep_targets=[0.8], strategies=["rl", "sliding"]),
    )
    assert main(["sweep", "--spec", str(spec_path)]) == 0
    assert (out / "checkpoint_t80.bin").exists()
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert [r["strategy"] for r in rows] == ["rl", "sliding"]
    assert all(r["target"] == "0.8" for r in rows)


def test_ablate_micro(tmp_path):
    out = tmp_path / "ablate"
    spec_path = tmp_path / "spec.json"
    write_spec(spec_path, micro_spec(out, ablate_knobs=["resolution"]))
    assert main(["ablate", "--spec", str(spec_path)]) == 0
    rows = list(csv.DictReader(open(out / "ablation.csv")))
    assert [r["knob"] for r in rows] == ["none", "resolution"]
    assert rows[0]["fixed_value"] == ""
    assert float(rows[0]["drop_vs_baseline"]) == 0.0
    assert int(rows[1]["num_configs"]) < int(rows[0]["num_configs"])
