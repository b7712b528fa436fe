"""Adaptive per-window input configuration for simulated action-query streams."""

from .cli import ExperimentSpec
from .configs import (
    KNOB_NAMES,
    ConfigTable,
    Configuration,
    CostProfile,
    NoFeasibleConfig,
    enumerate_configs,
    estimate_cost_metrics,
    invocation_time,
    load_table,
    normalize_fastness,
    plan_sliding_config,
    restrict_table,
    save_table,
)
from .dqn import (
    ExperienceTuple,
    NotWarmError,
    ReplayBuffer,
    TrainParams,
    TrainingDivergence,
    select_config,
    train_agent,
    train_step,
)
from .executors import (
    ExecutionReport,
    compare,
    default_frame_profile,
    merge_reports,
    run_frame_filter,
    run_heuristic,
    run_rl,
    run_segment_filter,
    run_sliding,
)
from .presets import config_table_preset, dataset_preset, reference_table
from .proxy import ApfgOutput, ApfgSim, FeatureCache, precompute_features
from .qnet import Adam, QNetwork, huber, load_checkpoint, save_checkpoint
from .rewards import (
    RewardParams,
    WindowAccumulator,
    aggregate_reward,
    local_reward,
    window_accuracy,
)
from .streams import (
    ActionInstance,
    DatasetParams,
    DatasetSynthesisError,
    VideoStream,
    frame_f1,
    label_at,
    load_dataset,
    save_dataset,
    synth_dataset,
    window_label,
)

__version__ = "0.1.0"
