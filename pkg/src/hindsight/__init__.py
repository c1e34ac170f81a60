"""Self-supervised goal-reaching on cheap discrete environments.

The package trains and compares six goal-conditioned learners (behavior
cloning, Q-learning with two reward conventions, soft Q-learning, their naive
combination, and an indicator-gated combination) on a Four Rooms gridworld,
and verifies the algebraic identities behind them exactly on small tabular
MDPs.
"""

from .algos import ALGO_KINDS, AlgoConfig, LossReport, her_reward, select_action
from .envs import FourRooms, TabularMDP, make_env, random_tabular_mdp
from .errors import ConfigError, NumericalError
from .harness import RunConfig, ablate, train, verify
from .metrics import (MetricsRecord, evaluate, imitated_action_map,
                      initial_ag_change_ratio, normalized_gain)
from .nn import (AdamState, Mlp, TargetCopy, adam_step, init_mlp,
                 load_checkpoint, logsumexp, mlp_backward, mlp_forward,
                 polyak_update, save_checkpoint)
from .replay import (ReplayBuffer, RelabeledBatch, RelabeledSample, Trajectory,
                     kind_is_positive, sample_batch)

__version__ = "0.1.0"

__all__ = [
    "ALGO_KINDS", "AdamState", "AlgoConfig", "ConfigError", "FourRooms",
    "LossReport", "MetricsRecord", "Mlp", "NumericalError", "RelabeledBatch",
    "RelabeledSample", "ReplayBuffer", "RunConfig", "TabularMDP", "TargetCopy",
    "Trajectory", "ablate", "adam_step", "evaluate", "her_reward",
    "imitated_action_map", "init_mlp", "initial_ag_change_ratio",
    "kind_is_positive", "load_checkpoint", "logsumexp", "make_env",
    "mlp_backward", "mlp_forward", "normalized_gain", "polyak_update",
    "random_tabular_mdp", "sample_batch", "save_checkpoint", "select_action",
    "train", "verify",
]
