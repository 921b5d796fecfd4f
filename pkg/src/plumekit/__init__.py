"""plumekit: methane plume enhancement, synthesis, detection and scoring.

Turns multiband SWIR radiance scenes into methane-enhanced [V, S, V]
feature stacks, generates labeled synthetic scenes, builds segmentation
datasets, runs a classical baseline detector, and scores prediction masks.

The building blocks live in one module per pipeline stage (raster, enhance,
synth, labeling, dataset, detect, evalmetrics); FeatureEnhancer and
PlumeDetector in :mod:`plumekit.estimators` give the core algorithm a
scikit-learn fit/transform/predict face. The ``plumekit`` CLI chains the
stages into reproducible runs.
"""

__version__ = "0.1.0"

from .enhance import FeatureStack, RegressionModel, ScaleFactor
from .estimators import FeatureEnhancer, PlumeDetector
from .raster import Field, Mask, Scene, export_image, read_brf, write_brf

__all__ = [
    "__version__",
    "Field",
    "Mask",
    "Scene",
    "FeatureStack",
    "RegressionModel",
    "ScaleFactor",
    "FeatureEnhancer",
    "PlumeDetector",
    "read_brf",
    "write_brf",
    "export_image",
]
