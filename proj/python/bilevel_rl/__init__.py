"""Policy-gradient process control with an embedded design optimizer."""

from ._core import (
    ControlDistribution,
    CstrDesign,
    CstrEnv,
    CstrParams,
    Environment,
    ObsStats,
    Policy,
    PolicyNetwork,
    RolloutMode,
    TankDesign,
    TankEnv,
    TimeGrid,
    Trajectory,
    compute_returns,
    log_prob,
    rollout,
    run_design,
    run_evaluate,
    run_pipeline,
    run_pretrain,
    run_train,
    validate_config,
)

__all__ = [
    "ControlDistribution",
    "CstrDesign",
    "CstrEnv",
    "CstrParams",
    "Environment",
    "ObsStats",
    "Policy",
    "PolicyNetwork",
    "RolloutMode",
    "TankDesign",
    "TankEnv",
    "TimeGrid",
    "Trajectory",
    "compute_returns",
    "log_prob",
    "rollout",
    "run_design",
    "run_evaluate",
    "run_pipeline",
    "run_pretrain",
    "run_train",
    "validate_config",
]
