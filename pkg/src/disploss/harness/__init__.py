from .config import ConfigError, RunConfig, dump_config, load_config
from .train import TrainingDiverged, evaluate, evaluate_checkpoint, train

__all__ = ["ConfigError", "RunConfig", "TrainingDiverged", "dump_config", "evaluate", "evaluate_checkpoint",
           "load_config", "train"]
