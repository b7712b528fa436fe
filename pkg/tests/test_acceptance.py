"""Go/no-go acceptance checks.

Each check emits one "criterion NN: PASS/FAIL" line via the verdict
fixture; the lines echo into the terminal summary so they stay visible in
batch logs.  Checks 1-5 are formula/numerics exactness, 6-9 are behavioral
trends on synthetic data at desk scale, 10 is determinism of the
command-line harness.
"""

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from adaptq.configs import (
    ConfigTable,
    Configuration,
    CostProfile,
    estimate_cost_metrics,
    normalize_fastness,
    plan_sliding_config,
    restrict_table,
)
from adaptq.dqn import ExperienceTuple, ReplayBuffer, TrainParams, train_agent
from adaptq.executors import run_heuristic, run_rl, run_sliding
from adaptq.presets import config_table_preset, dataset_preset, reference_table
from adaptq.proxy import ApfgSim
from adaptq.qnet import QNetwork, huber
from adaptq.rewards import RewardParams, aggregate_reward, local_reward
from adaptq.streams import (
    DatasetParams,
    VideoStream,
    frame_f1,
    synth_dataset,
    window_label,
)


# ---------------------------------------------------------------- 1


def test_criterion_01_reward_formulas(verdict):
    t0 = time.perf_counter()
    ok = True
    notes = []

    # shared-window reward: spot values must come out float-exact
    ok &= aggregate_reward(0.9, 0.8) == 0.5
    ok &= aggregate_reward(0.8, 0.8) == 1.0
    # the shortfall branch is literally achieved - target
    r = aggregate_reward(0.7, 0.8)
    ok &= r == 0.7 - 0.8 and abs(r - (-0.1)) < 1e-15
    notes.append(f"aggregate {aggregate_reward(0.9, 0.8)}/{aggregate_reward(0.8, 0.8)}/{r:.17f}")

    # per-decision reward over a 4-config table, betas hitting each alpha
    alphas = normalize_fastness([1282.0, 553.0, 285.0, 115.0])
    betas = [0.25] + [float(a) for a in alphas]
    combos = bad = 0
    for beta in betas:
        for a in alphas:
            for label in (False, True):
                want = beta - a if label else a
                got = local_reward(float(a), label, beta)
                combos += 1
                if got != want:
                    bad += 1
                # the sign flips exactly where alpha crosses beta
                if label and abs(a - beta) > 1e-12:
                    if (got > 0) != (a < beta):
                        bad += 1
    ok &= bad == 0
    notes.append(f"{combos} local combos")

    dt = time.perf_counter() - t0
    ok &= dt < 1.0
    verdict(1, ok, f"{'; '.join(notes)}; {dt:.3f}s")


# ---------------------------------------------------------------- 2


def test_criterion_02_fastness_normalization(verdict):
    t0 = time.perf_counter()
    fps = [1282.0, 553.0, 285.0, 115.0]
    alphas = normalize_fastness(fps)
    ok = abs(float(alphas.sum()) - 1.0) <= 1e-9
    ok &= list(np.argsort(alphas)) == list(np.argsort(fps))
    ok &= bool(np.all(np.diff(alphas) < 0))  # fps given fastest-first
    dt = time.perf_counter() - t0
    ok &= dt < 1.0
    verdict(2, ok, f"alphas {np.round(alphas, 8).tolist()} sum {alphas.sum():.12f}; {dt:.3f}s")


# ---------------------------------------------------------------- 3


def _label_oracle(video: VideoStream, s: int, e: int) -> bool:
    inside = sum(
        1
        for f in range(s, e)
        if any(inst.start <= f < inst.end for inst in video.instances)
    )
    return inside / (e - s) > 0.5


def _iou_oracle(video: VideoStream, s: int, e: int) -> bool:
    for inst in video.instances:
        inter = max(0, min(e, inst.end) - max(s, inst.start))
        union = max(e, inst.end) - min(s, inst.start)
        if inter / union > 0.5:
            return True
    return False


def test_criterion_03_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    params = DatasetParams(4, 512, 0.3, 40, 20, 8, 96, seed=31)
    videos = list(synth_dataset(params))
    videos.append(VideoStream("empty-512", 512))
    videos.append(synth_dataset(DatasetParams(1, 384, 0.55, 30, 10, 8, 64, seed=32))[0])

    windows = bad = 0
    for v in videos:
        for span in (5, 16, 50):
            for s in range(0, v.num_frames - span + 1, span):
                e = s + span
                windows += 1
                if window_label(v, s, e) != _label_oracle(v, s, e):
                    bad += 1
                if window_label(v, s, e, method="instance_iou") != _iou_oracle(v, s, e):
                    bad += 1
        # every offset once, at one span, for the densest stream
    v = videos[-1]
    for s in range(0, v.num_frames - 16 + 1):
        windows += 1
        if window_label(v, s, s + 16) != _label_oracle(v, s, s + 16):
            bad += 1

    rng = np.random.default_rng(33)
    pairs = mismatches = 0
    for _ in range(200):
        n = int(rng.integers(64, 512))
        p_bias, g_bias = rng.uniform(0.05, 0.95, size=2)
        pred = rng.random(n) < p_bias
        gt = rng.random(n) < g_bias
        scores = frame_f1(pred, gt)
        tp = sum(1 for a, b in zip(pred, gt) if a and b)
        fp = sum(1 for a, b in zip(pred, gt) if a and not b)
        fn = sum(1 for a, b in zip(pred, gt) if b and not a)
        tn = n - tp - fp - fn
        prec = 1.0 if tp + fp == 0 and fn == 0 else (0.0 if tp + fp == 0 else tp / (tp + fp))
        rec = 1.0 if tp + fn == 0 and fp == 0 else (0.0 if tp + fn == 0 else tp / (tp + fn))
        f1 = 0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec)
        pairs += 1
        if (scores.tp, scores.fp, scores.fn, scores.tn) != (tp, fp, fn, tn):
            mismatches += 1
        if abs(scores.f1 - f1) > 1e-12:
            mismatches += 1

    dt = time.perf_counter() - t0
    ok = bad == 0 and mismatches == 0 and dt < 5.0
    verdict(3, ok, f"{windows} windows, {pairs} mask pairs, "
                    f"{bad + mismatches} mismatches; {dt:.3f}s")


# ---------------------------------------------------------------- 4


def test_criterion_04_cost_model_identity(verdict):
    t0 = time.perf_counter()
    table = reference_table()
    video = VideoStream("long-10k", 10_000)
    sim = ApfgSim(table, noise_scale=0.0, seed=44)
    worst = 0.0
    for idx in range(len(table)):
        rep = run_sliding([video], sim, idx)
        fps = table.profile(idx).throughput_fps
        worst = max(worst, abs(rep.throughput_fps - fps) / fps)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and dt < 5.0
    verdict(4, ok, f"max relative throughput error {worst:.3e}; {dt:.3f}s")


# ---------------------------------------------------------------- 5


def test_criterion_05_learning_numerics(verdict):
    t0 = time.perf_counter()
    ok = True
    notes = []

    # Huber spot values are exact
    ok &= float(huber(0.5)) == 0.125 and float(huber(-0.5)) == 0.125
    ok &= float(huber(3.0)) == 2.5 and float(huber(-3.0)) == 2.5
    notes.append("huber exact")

    # central-difference gradient check on random small networks
    worst = 0.0
    for seed, (d, n) in ((50, (6, 3)), (51, (9, 4))):
        net = QNetwork(d, n, hidden=(12, 8), seed=seed)
        rng = np.random.default_rng(seed + 100)
        X = rng.normal(size=(16, d))
        actions = rng.integers(0, n, size=16)
        targets = rng.normal(size=16)
        args = (X, actions, targets)
        loss, *grads = net.backend.train_grads(*args, *net.params, 1.0)
        eps = 1e-6
        for pi, p in enumerate(net.params):
            flat = p.reshape(-1)
            for j in range(0, flat.size, max(1, flat.size // 7)):
                orig = flat[j]
                flat[j] = orig + eps
                lp = net.backend.train_grads(*args, *net.params, 1.0)[0]
                flat[j] = orig - eps
                lm = net.backend.train_grads(*args, *net.params, 1.0)[0]
                flat[j] = orig
                fd = (lp - lm) / (2 * eps)
                an = grads[pi].reshape(-1)[j]
                scale = max(abs(fd), abs(an), 1e-8)
                worst = max(worst, abs(fd - an) / scale)
    ok &= worst <= 1e-4
    notes.append(f"gradcheck {worst:.2e}")

    # cyclic eviction keeps exactly the newest capacity items, in order
    buf = ReplayBuffer(capacity=4, warmup=1)
    pushed = []
    for i in range(6):
        e = ExperienceTuple(np.array([float(i)]), i % 2, float(i), np.array([0.0]), False)
        pushed.append(e)
        buf.push(e)
    snap = buf.snapshot()
    ok &= len(snap) == 4 and all(a is b for a, b in zip(snap, pushed[2:]))
    notes.append("eviction exact")

    dt = time.perf_counter() - t0
    ok &= dt < 10.0
    verdict(5, ok, f"{'; '.join(notes)}; {dt:.3f}s")


# ---------------------------------------------------------------- 6


def test_criterion_06_dominant_action_learnability(verdict):
    t0 = time.perf_counter()
    table = ConfigTable(
        [
            (Configuration(100, 4, 4), CostProfile(1000.0, 0.90, 0.990)),
            (Configuration(300, 4, 2), CostProfile(25.0, 0.95, 0.995)),
        ]
    )
    alphas = table.alphas
    gamma = 0.95
    spans = [c.span for c in table.configs]  # 16 and 8

    train_videos = synth_dataset(DatasetParams(4, 1024, 0.0, 4, 1, 2, 8, seed=900))
    held_videos = synth_dataset(DatasetParams(2, 1024, 0.0, 4, 1, 2, 8, seed=901))
    sim = ApfgSim(table, noise_scale=0.0, seed=900)
    rp = RewardParams(beta=0.25, target_accuracy=0.85, mode="local")
    tp = TrainParams(episodes=12, batch_size=64, warmup=500, seed=900)
    net, _ = train_agent(train_videos, sim, rp, tp)

    # exhaustive optimum: action-value recursion over reachable positions
    nf = 1024
    V = np.zeros(nf // 8 + 3)
    dominant = int(np.argmax(alphas))
    for p in range(nf - 8, -8, -8):
        vals = [alphas[c] + gamma * V[min(p + spans[c], nf) // 8] for c in range(2)]
        V[p // 8] = max(vals)
        assert int(np.argmax(vals)) == dominant  # the MDP really is dominant

    hits = total = 0
    ratios = []
    for v in held_videos:
        rep = run_rl([v], sim, net, record_trace=True)
        trace = rep.traces
        assert trace[0]["config"] == table.most_accurate_index() == 1
        picks = [t["config"] for t in trace[1:]]
        hits += sum(1 for c in picks if c == dominant)
        total += len(picks)
        ret, disc = 0.0, 1.0
        for t in trace:
            label = window_label(v, t["start"], t["start"] + t["span"])
            ret += disc * local_reward(float(alphas[t["config"]]), label, rp.beta)
            disc *= gamma
        opt = float(alphas[1]) + gamma * V[1]  # forced accurate opener, then optimal
        ratios.append(ret / opt)

    dt = time.perf_counter() - t0
    ok = hits / total >= 0.95 and min(ratios) >= 0.95 and dt < 60.0
    verdict(6, ok, f"dominant picks {hits}/{total}, "
                    f"return ratio {min(ratios):.4f}; {dt:.1f}s")


# ---------------------------------------------------------------- 7


def test_criterion_07_speedup_at_target(verdict):
    t0 = time.perf_counter()
    details = []
    ok = True
    for seed in (0, 1, 2):
        train = synth_dataset(dataset_preset("bdd", num_videos=8, frames_per_video=2048, seed=seed))
        val = synth_dataset(dataset_preset("bdd", num_videos=4, frames_per_video=2048, seed=seed + 1000))
        holdout = synth_dataset(dataset_preset("bdd", num_videos=6, frames_per_video=2048, seed=seed + 2000))
        sim = ApfgSim(reference_table(), seed=seed)
        table = estimate_cost_metrics(val, sim)
        plan_idx = table.index_of(plan_sliding_config(table, 0.85))
        rp = RewardParams(beta=0.25, target_accuracy=0.85, mode="local")
        tp = TrainParams(episodes=48, batch_size=64, warmup=2000, gamma=0.8, seed=seed)
        net, _ = train_agent(train, sim, rp, tp)
        rl = run_rl(holdout, sim, net)
        sliding = run_sliding(holdout, sim, plan_idx)
        speedup = rl.throughput_fps / sliding.throughput_fps
        ok &= rl.f1 >= 0.83 and speedup >= 1.3
        details.append(f"s{seed} f1 {rl.f1:.3f} x{speedup:.2f}")
    dt = time.perf_counter() - t0
    ok &= dt < 600.0
    verdict(7, ok, f"{', '.join(details)}; {dt:.0f}s")


# ---------------------------------------------------------------- 8


def test_criterion_08_accuracy_closeness_on_dense_streams(verdict):
    t0 = time.perf_counter()
    target = 0.85
    wins = 0
    details = []
    for seed in (0, 1, 2):
        train = synth_dataset(dataset_preset("thumos", num_videos=8, frames_per_video=2048, seed=seed + 50))
        holdout = synth_dataset(dataset_preset("thumos", num_videos=4, frames_per_video=2048, seed=seed + 3000))
        for split in (train, holdout):
            frac = sum(v.action_frames() for v in split) / sum(v.num_frames for v in split)
            assert frac >= 0.40  # the dense-stream premise of this check
        sim = ApfgSim(reference_table(), seed=seed)
        rp = RewardParams(beta=0.25, target_accuracy=target, mode="aggregate")
        tp = TrainParams(episodes=40, batch_size=64, warmup=2000, seed=seed)
        net, _ = train_agent(train, sim, rp, tp)
        rl_gap = abs(run_rl(holdout, sim, net).f1 - target)
        heur_gap = abs(run_heuristic(holdout, sim).f1 - target)
        wins += rl_gap <= heur_gap
        details.append(f"s{seed} gaps {rl_gap:.3f}/{heur_gap:.3f}")
    dt = time.perf_counter() - t0
    ok = wins >= 2
    verdict(8, ok, f"{wins}/3 seeds closer to target ({', '.join(details)}); {dt:.0f}s")


# ---------------------------------------------------------------- 9


def test_criterion_09_knob_ablation_ordering(verdict):
    t0 = time.perf_counter()
    full = config_table_preset("bdd")
    accurate = full.config(full.most_accurate_index())
    ok = True
    details = []
    for seed in (0, 1, 2):
        train = synth_dataset(dataset_preset("bdd", num_videos=6, frames_per_video=1536, seed=seed + 70))
        holdout = synth_dataset(dataset_preset("bdd", num_videos=4, frames_per_video=1536, seed=seed + 4000))

        def throughput(table):
            sim = ApfgSim(table, seed=seed)
            rp = RewardParams(beta=1.0 / len(table), target_accuracy=0.85, mode="local")
            tp = TrainParams(episodes=40, batch_size=64, warmup=2000, gamma=0.8, seed=seed)
            net, _ = train_agent(train, sim, rp, tp)
            return run_rl(holdout, sim, net).throughput_fps

        base = throughput(full)
        drops = {}
        for knob in ("resolution", "segment_length", "sampling_rate"):
            sub = restrict_table(full, knob, getattr(accurate, knob))
            drops[knob] = (base - throughput(sub)) / base
        ok &= drops["sampling_rate"] > max(drops["resolution"], drops["segment_length"])
        ok &= drops["resolution"] < min(drops["sampling_rate"], drops["segment_length"])
        details.append(
            f"s{seed} r/l/s {drops['resolution']:.0%}/{drops['segment_length']:.0%}/{drops['sampling_rate']:.0%}"
        )
    dt = time.perf_counter() - t0
    verdict(9, ok, f"{', '.join(details)}; {dt:.0f}s")


# ---------------------------------------------------------------- 10


def test_criterion_10_harness_determinism(verdict, tmp_path):
    t0 = time.perf_counter()
    spec = {
        "seed": 5,
        "out_dir": "placeholder",
        "dataset": {
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
        },
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
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))

    def run_pipeline(out: Path) -> dict[str, bytes]:
        for command in ("train", "eval"):
            proc = subprocess.run(
                [sys.executable, "-m", "adaptq.cli", command,
                 "--spec", str(spec_path), "--out", str(out)],
                capture_output=True, text=True,
            )
            assert proc.returncode == 0, proc.stderr
        return {
            name: (out / name).read_bytes()
            for name in ("training_log.csv", "report.csv", "comparison.csv")
        }

    first = run_pipeline(tmp_path / "a")
    second = run_pipeline(tmp_path / "b")
    ok = first == second
    dt = time.perf_counter() - t0
    verdict(10, ok, "train+eval CSVs byte-identical across reruns "
                     f"(wall-clock lives only in meta JSON); {dt:.0f}s")
