from .blocksworld import BlocksWorld, BlocksState, enumerate_states, load_variations
from .critic import ValueNet
from .agent import RLConfig, Trajectory, gae, ppo_update, reinforce_update, train_rl

__all__ = [
    "BlocksWorld", "BlocksState", "enumerate_states", "load_variations",
    "ValueNet", "RLConfig", "Trajectory", "gae", "ppo_update",
    "reinforce_update", "train_rl",
]
