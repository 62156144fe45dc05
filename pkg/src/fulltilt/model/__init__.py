from .checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
from .config import DESK, TINY, ModelConfig
from .network import Detection, DenoisingQueries, FullTiltNet, build_model, to_detections

__all__ = [
    "DESK",
    "TINY",
    "ModelConfig",
    "FullTiltNet",
    "DenoisingQueries",
    "Detection",
    "build_model",
    "to_detections",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_hash",
]
