"""Tree-search policy improvement with learned models, plus off-policy
targets harvested from the search tree itself."""

from .config import RunConfig, config_from_dict, load_config, save_config
from .envs import make_env
from .mcts import SearchParams, run_search
from .networks import Network, load_checkpoint, save_checkpoint
from .presets import build_config
from .replay import GameHistory, ReplayBuffer
from .trainer import LossWeights, Trainer, WeightSchedule, scale_weights

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "config_from_dict", "load_config", "save_config",
    "make_env", "SearchParams", "run_search", "Network",
    "load_checkpoint", "save_checkpoint", "build_config",
    "GameHistory", "ReplayBuffer", "LossWeights", "Trainer",
    "WeightSchedule", "scale_weights", "__version__",
]
