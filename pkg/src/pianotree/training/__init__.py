from .config import ConfigError, TrainConfig, dump_config, load_config, parse_config
from .data import AUGMENT_SHIFTS, CorpusIndex, SongEntry, augment, split_dataset
from .loop import TrainingDiverged, TrainResult, train
from .schedules import Schedules
from .synthetic import desk_corpus

__all__ = [
    "AUGMENT_SHIFTS",
    "ConfigError",
    "CorpusIndex",
    "Schedules",
    "SongEntry",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "augment",
    "desk_corpus",
    "dump_config",
    "load_config",
    "parse_config",
    "split_dataset",
    "train",
]
