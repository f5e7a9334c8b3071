from .buffer import ReplayBuffer, StoredTrajectory, TransitionBatch
from .qlearning import QLearner, QTable, linear_epsilon, q_update, q_update_batch
from .sac import SacConfig, SacLite
from .redistributors import (
    IRCRRedistributor, RBTRedistributor, RRDRedistributor, RawRedistributor, Redistributor,
    make_redistributor,
)
from .loop import LOG_COLUMNS, LogRow, LoopConfig, TrainingLog, evaluate, read_log, rlbr_loop

__all__ = [
    "ReplayBuffer", "StoredTrajectory", "TransitionBatch",
    "QLearner", "QTable", "linear_epsilon", "q_update", "q_update_batch",
    "SacConfig", "SacLite",
    "IRCRRedistributor", "RBTRedistributor", "RRDRedistributor", "RawRedistributor", "Redistributor",
    "make_redistributor",
    "LOG_COLUMNS", "LogRow", "LoopConfig", "TrainingLog", "evaluate", "read_log", "rlbr_loop",
]
