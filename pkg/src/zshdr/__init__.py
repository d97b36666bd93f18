"""Zero-shot SDR video to HDR expansion, trained per video with self-supervision."""

from .exposure import (
    AutoExposureState,
    HdrFrame,
    SdrFrame,
    TrainingPair,
    apply_exposure,
    auto_exposure_value,
    build_training_set,
    compute_residual,
    quantize8,
    simulate_sdr,
    simulate_sdr_sequence,
)
from .fusion import ExposureStack, FusionConfig, expand_stack, expand_video, fuse_stack, step_down, step_up
from .metrics import DisplayModel, PuCurve, display_map, pu_encode, pu_psnr, pu_ssim
from .model import ModelConfig, ResidualUNet, load_weights, save_weights
from .nn import AdamConfig, Parameter, adam_step
from .training import TrainConfig, TrainReport, image_loss, residual_loss, total_loss, train_video

__version__ = "0.1.0"

__all__ = [
    "AdamConfig",
    "AutoExposureState",
    "DisplayModel",
    "ExposureStack",
    "FusionConfig",
    "HdrFrame",
    "ModelConfig",
    "Parameter",
    "PuCurve",
    "ResidualUNet",
    "SdrFrame",
    "TrainConfig",
    "TrainReport",
    "TrainingPair",
    "adam_step",
    "apply_exposure",
    "auto_exposure_value",
    "build_training_set",
    "compute_residual",
    "display_map",
    "expand_stack",
    "expand_video",
    "fuse_stack",
    "image_loss",
    "load_weights",
    "pu_encode",
    "pu_psnr",
    "pu_ssim",
    "quantize8",
    "residual_loss",
    "save_weights",
    "simulate_sdr",
    "simulate_sdr_sequence",
    "step_down",
    "step_up",
    "total_loss",
    "train_video",
]
