from .tasks import TASKS, TaskSpec, network_config, oracle
from .generators import ILPInstance, gen_family_tree, gen_graph, make_instance
from .training import TrainingDiverged, evaluate, pss, train_supervised

__all__ = [
    "TASKS", "TaskSpec", "network_config", "oracle", "ILPInstance",
    "gen_family_tree", "gen_graph", "make_instance", "train_supervised",
    "evaluate", "pss", "TrainingDiverged",
]
