"""Reduced-order quadruped simulator, episode rollout and sweeps."""

from .core import (
    CONTROL_DT,
    GRAVITY,
    PHYSICS_DT,
    ContactParams,
    SimModel,
    SimState,
    SolverParams,
    StepStats,
    advance,
    build_model,
    initial_state,
    pd_torque,
    step,
    termination_code,
    total_energy,
)
from .episode import (
    ADMISSION_DURATION,
    ADMISSION_MIN_HEIGHT,
    ADMISSION_TILT,
    DISCOUNT,
    REWARD_TERMS,
    REWARD_WEIGHTS,
    TERMINATION_PENALTY,
    AdmissionResult,
    CommandProtocol,
    CommandSegment,
    EpisodeResult,
    PushSchedule,
    run_episode,
    stand_admission,
    success_rate,
)
from .surrogate import SurrogateShape, normalized_distance, raised_cosine, surrogate_oracle
from .sweeps import (
    SweepAxis,
    SweepPoint,
    SweepResult,
    SweepSpec,
    evaluate,
    pd_grid_sweep,
    robustness_sweep,
    trial_rng,
)

__all__ = [name for name in dir() if not name.startswith("_")]
