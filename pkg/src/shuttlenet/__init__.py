"""Turn-based stroke forecasting for badminton rallies."""
from .fusion import AblationFlags
from .harness import (TrainConfig, evaluate, forecast, load_model, save_model, train,
                      type_accuracy)
from .model import ModelConfig, ShuttleNet
from .rally_data import (SynthConfig, gen_synthetic, load_rallies, normalize_coords,
                         split_dataset, write_rallies)

__all__ = [
    "AblationFlags", "ModelConfig", "ShuttleNet", "SynthConfig", "TrainConfig", "evaluate",
    "forecast", "gen_synthetic", "load_model", "load_rallies", "normalize_coords", "save_model",
    "split_dataset", "train", "type_accuracy", "write_rallies",
]
