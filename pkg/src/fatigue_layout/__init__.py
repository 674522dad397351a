"""Fatigue-aware button layout optimisation for mid-air pointing tasks.

The package couples a three-compartment muscle fatigue model to a two-link
arm that reaches buttons on a 3x6 grid, and searches layouts with a
policy-gradient agent, Bayesian optimisation or exhaustive enumeration.
"""

from ._validation import ConfigError, InputDomainError, NumericError, ReachabilityError
from .arm import ArmModel, FittsParams, forward_kinematics, inverse_kinematics, plan_reach
from .baselines import (
    BayesOptLayoutOptimizer,
    BOConfig,
    ExhaustiveOracle,
    bayes_opt,
    compare,
    enumerate_exhaustive,
    static_layout,
)
from .config import RunConfig, load_config
from .fatigue import (
    FatigueParams,
    MuscleBank,
    MuscleFatigueTransformer,
    MuscleGroup,
    MuscleState,
    default_bank,
    simulate_group,
    step,
)
from .rl import RLLayoutOptimizer, TrainConfig, episode_reward_3btn, episode_reward_freq, train
from .task import ButtonTaskEnv, Canvas, EpisodeConfig, SequenceSpec, motion_reward, run_episode

__version__ = "0.1.0"

__all__ = [
    "ArmModel", "BOConfig", "BayesOptLayoutOptimizer", "ButtonTaskEnv", "Canvas", "ConfigError",
    "EpisodeConfig", "ExhaustiveOracle", "FatigueParams", "FittsParams", "InputDomainError",
    "MuscleBank", "MuscleFatigueTransformer", "MuscleGroup", "MuscleState", "NumericError",
    "RLLayoutOptimizer", "ReachabilityError", "RunConfig", "SequenceSpec", "TrainConfig",
    "bayes_opt", "compare", "default_bank", "enumerate_exhaustive", "episode_reward_3btn",
    "episode_reward_freq", "forward_kinematics", "inverse_kinematics", "load_config",
    "motion_reward", "plan_reach", "run_episode", "simulate_group", "static_layout", "step", "train",
]
