"""Trainable signal enhancer: reconstructs full-rate tri-axial frames from
downsampled ones with a denoising convolutional autoencoder."""

from .config import (
    ENCODER_DENSE_WIDTHS,
    FRAME_VALUES,
    AseConfig,
    TrainSpec,
    build_config,
    encoder_channels,
)
from .io import load_model, model_from_bytes, model_to_bytes, save_model
from .net import AseModel, enhance, forward, forward_batch, init_model, parameter_shapes
from .train import TrainingDivergedError, TrainResult, gradients, mae_loss, objective, train

__all__ = [
    "ENCODER_DENSE_WIDTHS",
    "FRAME_VALUES",
    "AseConfig",
    "AseModel",
    "TrainResult",
    "TrainSpec",
    "TrainingDivergedError",
    "build_config",
    "encoder_channels",
    "enhance",
    "forward",
    "forward_batch",
    "gradients",
    "init_model",
    "load_model",
    "mae_loss",
    "model_from_bytes",
    "model_to_bytes",
    "objective",
    "parameter_shapes",
    "save_model",
    "train",
]
