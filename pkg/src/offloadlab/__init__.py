"""Learning-based binary computation offloading for wireless-powered MEC networks."""

from .actor import (
    ActorModel,
    FeatureScaling,
    KSchedule,
    ReplayMemory,
    TrainConfig,
    adapt_k,
    checkpoint_load,
    checkpoint_save,
    featurize,
    forward,
    quantize,
    remember,
    train_step,
)
from .baselines import (
    BaselineResult,
    BudgetTracker,
    all_edge,
    all_local,
    coordinate_descent,
    enumerate_opt,
    myopic,
)
from .config import load_config
from .critic import (
    ScoredAction,
    SolverTolerances,
    best_action,
    oracle_grid,
    solve_lyapunov,
    solve_wpt,
    solve_wpt_nested,
)
from .harness import (
    Event,
    ExperimentConfig,
    RunSummary,
    SlotRecord,
    bench_runtime,
    emit_csv,
    estimate_capacity,
    run_droo,
    run_lydroo,
    weight_flip_events,
)
from .model import (
    ConfigError,
    FeasibilityError,
    InvariantError,
    OffloadAction,
    QueueState,
    SlotObservation,
    SlotOutcome,
    SystemConfig,
    check_feasible,
    execute,
    gen_arrivals,
    gen_channels,
    lyapunov_score,
    step_queues,
    utility_wpt,
)

__version__ = "0.1.0"
