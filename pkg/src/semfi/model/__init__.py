from .config import DenoiserConfig
from .schedule import NoiseSchedule
from .codec import PixelCodec
from .text import TextEncoder
from .patches import patchify, unpatchify
from .denoiser import Denoiser, forward_denoiser
from .sampling import sample
from .training import TrainState, training_step, parameter_checksum
from .checkpoint import (
    load_checkpoint,
    load_model_checkpoint,
    save_checkpoint,
    save_model_checkpoint,
)

__all__ = [
    "DenoiserConfig",
    "NoiseSchedule",
    "PixelCodec",
    "TextEncoder",
    "patchify",
    "unpatchify",
    "Denoiser",
    "forward_denoiser",
    "sample",
    "TrainState",
    "training_step",
    "parameter_checksum",
    "save_checkpoint",
    "load_checkpoint",
    "save_model_checkpoint",
    "load_model_checkpoint",
]
