"""Classical baseline plume detector over [V, S, V] feature stacks.

Plume pixels are anomalously *low* in the ratio channels, so the detector
thresholds the chosen channel at ``median - k_sigma * 1.4826 * MAD``.
Median/MAD statistics resist contamination by the plume pixels themselves,
which a mean/std threshold would not. Detected pixels are grouped into
connected components and filtered by minimum area; min_area_px=1 keeps
single-pixel plumes (one 20 m pixel = 400 m^2) detectable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .enhance import FeatureStack
from .labeling import connected_components
from .raster import Mask
from .validation import InvariantError

MAD_TO_SIGMA = 1.4826  # Gaussian-consistent MAD scaling

CHANNELS = ("V", "S", "min")


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholding rules for the baseline detector."""

    k_sigma: float = 4.0
    channel: str = "S"
    min_area_px: int = 1
    connectivity: int = 8

    def __post_init__(self):
        if self.k_sigma <= 0:
            raise InvariantError("k_sigma must be > 0")
        if self.channel not in CHANNELS:
            raise InvariantError(f"channel must be one of {CHANNELS}")
        if self.min_area_px < 1:
            raise InvariantError("min_area_px must be >= 1")
        if self.connectivity not in (4, 8):
            raise InvariantError("connectivity must be 4 or 8")


def _select_channel(stack: FeatureStack, channel: str) -> np.ndarray:
    if channel == "V":
        return stack.channels[0].values.astype(np.float64)
    if channel == "S":
        return stack.channels[1].values.astype(np.float64)
    # "min" fusion = minimum detection evidence: plume anomalies are
    # negative, so keeping the per-pixel *larger* value retains the weaker
    # of the two responses and a pixel must be anomalous in both V and S
    # to cross the threshold
    return np.maximum(
        stack.channels[0].values.astype(np.float64),
        stack.channels[1].values.astype(np.float64),
    )


def detect_plumes(stack: FeatureStack, cfg: DetectorConfig | None = None) -> Mask:
    """Binary mask of pixels below median - k_sigma * robust std.

    A constant channel (zero MAD) cannot define an anomaly scale; that case
    warns and returns an empty mask. Components smaller than
    ``min_area_px`` under ``connectivity`` are dropped.
    """
    if cfg is None:
        cfg = DetectorConfig()
    values = _select_channel(stack, cfg.channel)
    med = float(np.median(values))
    mad = float(np.median(np.abs(values - med)))
    robust_std = MAD_TO_SIGMA * mad
    if robust_std == 0.0:
        warnings.warn("constant channel: zero MAD, returning empty mask", stacklevel=2)
        return Mask(np.zeros(stack.shape, dtype=np.uint8))

    anomalous = values < med - cfg.k_sigma * robust_std
    candidate = Mask(anomalous.astype(np.uint8))
    if cfg.min_area_px == 1:
        return candidate

    keep = np.zeros(stack.shape, dtype=np.uint8)
    for comp in connected_components(candidate, cfg.connectivity):
        if comp.area_px >= cfg.min_area_px:
            for x, y in comp.pixel_list:
                keep[y, x] = 1
    return Mask(keep)
