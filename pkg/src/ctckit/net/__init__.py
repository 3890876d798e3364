from .model import CheckpointError, Model, ModelError, spec_digest, validate_model_spec
from .optim import Adam, SgdMomentum, make_optimizer
from .train import DivergenceError, EpochMetrics, TrainConfig, Utterance, train

__all__ = [
    "Adam",
    "CheckpointError",
    "DivergenceError",
    "EpochMetrics",
    "Model",
    "ModelError",
    "SgdMomentum",
    "TrainConfig",
    "Utterance",
    "make_optimizer",
    "spec_digest",
    "train",
    "validate_model_spec",
]
