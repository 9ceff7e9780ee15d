from .layers import KINDS, LAYER_TYPES, Layer, make_layer
from .network import ModelFormatError, ToyGenerator, default_generator, load_model, save_model
from .procedural import FAMILIES, procedural_generate
from .training import (TrainConfig, TrainingDiverged, TriggerSpec, default_trigger, hue_shift, mse,
                       train, train_with_trigger)

__all__ = [
    "KINDS", "LAYER_TYPES", "Layer", "make_layer",
    "ModelFormatError", "ToyGenerator", "default_generator", "load_model", "save_model",
    "FAMILIES", "procedural_generate",
    "TrainConfig", "TrainingDiverged", "TriggerSpec", "default_trigger", "hue_shift", "mse",
    "train", "train_with_trigger",
]
