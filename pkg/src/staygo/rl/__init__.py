"""DQN decision method and its compiled/pure-Python training kernels."""
from ._backend import BACKEND, kernels
from .agent import (
    FULL_SCHEDULE,
    DQNAgent,
    DQNMethod,
    QNetwork,
    ReplayBuffer,
    TrainSchedule,
    greedy,
    retrain_after_mission,
    reward,
    reward_table,
)

__all__ = [
    "BACKEND", "kernels", "FULL_SCHEDULE", "DQNAgent", "DQNMethod", "QNetwork", "ReplayBuffer",
    "TrainSchedule", "greedy", "retrain_after_mission", "reward", "reward_table",
]
