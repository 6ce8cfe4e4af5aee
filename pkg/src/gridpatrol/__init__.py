"""Multi-agent road-network monitoring: gridworld, sync protocol, DQN, eval."""

from .env import MonitorEnv, RewardConfig, StepResult, compute_reward, encode_observation
from .errors import (
    ArchMismatch,
    ArityError,
    CheckpointError,
    ChecksumError,
    ConfigError,
    EmptyRoadNetwork,
    EmptyTrace,
    GridPatrolError,
    InvariantViolation,
    NumericError,
    ParseError,
    PlacementError,
    ShapeError,
    StaleLogError,
    VersionError,
)
from .evalkit import (
    EpisodeTrace,
    EvalResult,
    GreedyUncertaintyPolicy,
    QPolicy,
    RandomPolicy,
    SweepTable,
    average_uncertainty,
    emit_artifacts,
    evaluate,
    run_episode,
    sweep,
    trace_to_csv,
)
from .gridworld import (
    ACTION_DELTAS,
    Action,
    Cell,
    CellKind,
    GridMap,
    MoveOutcome,
    N_ACTIONS,
    cell_center,
    load_map,
    neighbors_in_range,
    resolve_moves,
)
from .qnet import (
    AdamState,
    NetArch,
    QParams,
    adam_step,
    backward,
    forward,
    forward_cached,
    init_params,
    load_checkpoint,
    loss_and_grads,
    save_checkpoint,
)
from .trainer import (
    EpisodeStats,
    ReplayMemory,
    TrainConfig,
    TrainResult,
    compute_targets,
    epsilon_schedule,
    flush_staging,
    select_action,
    train,
)
from .uncertainty import (
    EventField,
    NEVER,
    UncertaintyField,
    VisitClock,
    VisitLog,
    clear_events,
    event_uncertainty,
    field_from_clock,
    field_from_events,
    field_to_csv,
    fresh_clock,
    global_update,
    local_update,
    make_alpha,
    parse_visit_log,
    reconcile_local,
    record_visits,
    serialize_visit_log,
    staleness_field,
    staleness_uncertainty,
    step_events,
)
from .configs import (
    EnvSettings,
    EvalSettings,
    ExperimentConfig,
    apply_overrides,
    config_from_dict,
    load_config,
    resolve_map,
)

__version__ = "0.1.0"
