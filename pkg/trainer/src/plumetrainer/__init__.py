"""plume-trainer: segmentation training on plumekit dataset manifests.

Consumes manifest JSON + BRF tiles produced by the plumekit pipeline,
trains U-Net (MobileNetV2/ResNet34 encoders) or a compact SegNeXt with a
combined focal+dice loss, and emits prediction BRFs that ``plumekit eval``
scores directly.
"""

__version__ = "0.1.0"

from .losses import LossConfig, combined_loss, dice_loss, focal_loss
from .models import ARCHITECTURES, build_model
from .train import TrainConfig, TrainHistory, grid_search, predict, train

__all__ = [
    "__version__",
    "ARCHITECTURES",
    "LossConfig",
    "TrainConfig",
    "TrainHistory",
    "build_model",
    "combined_loss",
    "dice_loss",
    "focal_loss",
    "grid_search",
    "predict",
    "train",
]
