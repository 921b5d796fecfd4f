"""Spectral enhancement: band-ratio fields and the [V, S, V] feature stack.

Methane absorbs in SWIR band 12 while leaving band 11 essentially
untouched, so a plume shows up as a local *deficit* of B12 relative to a
reference. Two per-pixel ratio fields exploit this:

* Varon ratio ``V = (c*R12 - R11) / R11`` with a scale factor ``c`` chosen
  by least squares so that background pixels sit near zero.
* Sanchez ratio ``S = V(R12, R12_hat)``: the same form, but the reference
  is a regression prediction ``R12_hat`` of the methane-free B12 radiance
  from non-absorbing bands, which adapts to surface type and suppresses
  false positives (water, dark soils).

Stacking [V, S, V] gives a three-channel image suitable for RGB-input
models; channel 0 and channel 2 are bit-identical by construction and stay
that way through z-score normalization.

All fits accumulate in double precision over row-major pixel order, so
results do not depend on threading or chunking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import Field, Mask, Scene
from .validation import (
    DegenerateFitError,
    InvariantError,
    MissingBandError,
    check_same_shape,
)

R11_FLOOR = 1e-6  # reference radiance below this is treated as no-data
Z_SIGMA_FLOOR = 1e-8  # keeps z-scoring total on constant channels

TARGET_BAND = "B12"
DEFAULT_PREDICTORS = ("B11",)


@dataclass(frozen=True)
class ScaleFactor:
    """Least-squares calibration aligning c*R12 to the reference band.

    ``c`` minimizes sum((c*R12 - R11)^2) over the fitted pixels, i.e.
    c = sum(R11*R12) / sum(R12^2). ``n_pixels`` is the fit support size.
    """

    c: float
    n_pixels: int

    def __post_init__(self):
        if not np.isfinite(self.c):
            raise InvariantError("scale factor is not finite")
        if self.n_pixels < 2:
            raise InvariantError("scale factor needs >= 2 fit pixels")


@dataclass(frozen=True)
class RegressionModel:
    """Ordinary-least-squares background model predicting B12.

    Serialized as {"predictors": [...], "coefficients": [...],
    "intercept": x, "residual_rms": r}.
    """

    predictor_bands: tuple[str, ...]
    coefficients: tuple[float, ...]
    intercept: float
    residual_rms: float

    def __post_init__(self):
        if len(self.coefficients) != len(self.predictor_bands):
            raise InvariantError("one coefficient per predictor band required")
        if self.residual_rms < 0:
            raise InvariantError("residual_rms must be >= 0")

    def to_json(self) -> dict:
        return {
            "predictors": list(self.predictor_bands),
            "coefficients": list(self.coefficients),
            "intercept": self.intercept,
            "residual_rms": self.residual_rms,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RegressionModel":
        return cls(
            predictor_bands=tuple(obj["predictors"]),
            coefficients=tuple(float(c) for c in obj["coefficients"]),
            intercept=float(obj["intercept"]),
            residual_rms=float(obj["residual_rms"]),
        )


class FeatureStack:
    """Three-channel [V, S, V] pseudo-RGB stack.

    Channel 0 and channel 2 are always bit-identical. ``normalization``
    records the per-channel (mean, std) divisors applied by :func:`zscore`,
    or None for a raw stack.
    """

    def __init__(
        self,
        v: Field,
        s: Field,
        v_dup: Field | None = None,
        normalization: tuple[tuple[float, float], ...] | None = None,
    ):
        check_same_shape(v, s, "stack channels")
        if v_dup is None:
            v_dup = v
        if v_dup.values.tobytes() != v.values.tobytes():
            raise InvariantError("stack channels 0 and 2 must be bit-identical")
        self.channels: tuple[Field, Field, Field] = (v, s, v_dup)
        if normalization is not None:
            normalization = tuple((float(m), float(sd)) for m, sd in normalization)
            if len(normalization) != 3:
                raise InvariantError("normalization needs one (mean, std) per channel")
        self.normalization = normalization

    @property
    def shape(self) -> tuple[int, int]:
        return self.channels[0].shape

    @property
    def height(self) -> int:
        return self.channels[0].height

    @property
    def width(self) -> int:
        return self.channels[0].width

    def as_array(self) -> np.ndarray:
        """(3, H, W) float32 view of the channels."""
        return np.stack([ch.values for ch in self.channels])

    def validate(self) -> None:
        for ch in self.channels:
            ch.validate()
        if self.channels[0].values.tobytes() != self.channels[2].values.tobytes():
            raise InvariantError("stack channels 0 and 2 must be bit-identical")

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureStack):
            return NotImplemented
        return (
            all(a == b for a, b in zip(self.channels, other.channels))
            and self.normalization == other.normalization
        )

    def __repr__(self) -> str:
        tag = "zscored" if self.normalization else "raw"
        return f"FeatureStack({self.width}x{self.height}, {tag})"


# ---------------------------------------------------------------------------
# Fits
# ---------------------------------------------------------------------------


def _fit_selection(shape, fit_mask: Mask | None) -> np.ndarray | slice:
    if fit_mask is None:
        return slice(None)
    if fit_mask.shape != shape:
        raise InvariantError(
            f"fit mask shape {fit_mask.shape} does not match field shape {shape}"
        )
    return fit_mask.labels.reshape(-1) != 0


def fit_scale_c(r12: Field, r11: Field, fit_mask: Mask | None = None) -> ScaleFactor:
    """Fit the scale factor c minimizing sum((c*R12 - R11)^2).

    The fit runs over the nonzero pixels of ``fit_mask`` (all pixels when
    None). Raises DegenerateFitError when fewer than two pixels are
    selected or R12 is identically zero on the selection.
    """
    check_same_shape(r12, r11, "R12/R11")
    sel = _fit_selection(r12.shape, fit_mask)
    x = r12.values.reshape(-1)[sel].astype(np.float64)
    y = r11.values.reshape(-1)[sel].astype(np.float64)
    if x.size < 2:
        raise DegenerateFitError(f"scale fit needs >= 2 pixels, got {x.size}")
    denom = float(np.sum(x * x))
    if denom <= 0.0:
        raise DegenerateFitError("scale fit is singular: R12 is zero on the fit mask")
    c = float(np.sum(x * y)) / denom
    return ScaleFactor(c=c, n_pixels=int(x.size))


def varon_ratio(
    r12: Field,
    r11: Field,
    c: ScaleFactor | float,
    r11_floor: float = R11_FLOOR,
) -> tuple[Field, int]:
    """Per-pixel ratio V = (c*R12 - R11) / R11.

    Pixels whose reference radiance R11 is at or below ``r11_floor`` are
    set to 0 instead of dividing by (near) zero. Returns the ratio field
    and the count of floored pixels.
    """
    check_same_shape(r12, r11, "R12/R11")
    cval = float(c.c if isinstance(c, ScaleFactor) else c)
    num = cval * r12.values.astype(np.float64) - r11.values.astype(np.float64)
    ref = r11.values.astype(np.float64)
    floored = ref <= r11_floor
    out = np.zeros(ref.shape, dtype=np.float64)
    ok = ~floored
    out[ok] = num[ok] / ref[ok]
    return Field(out), int(np.count_nonzero(floored))


def fit_background_regression(
    scene: Scene,
    background_mask: Mask | None,
    predictor_bands: tuple[str, ...] | list[str] = DEFAULT_PREDICTORS,
) -> RegressionModel:
    """OLS fit of B12 against the given predictor bands plus an intercept.

    Only background pixels (nonzero in ``background_mask``; all pixels when
    None) enter the fit. Raises DegenerateFitError on a rank-deficient
    design matrix (e.g. duplicate predictors) and InvariantError when there
    are fewer pixels than parameters.
    """
    predictors = tuple(predictor_bands)
    if not predictors:
        raise InvariantError("at least one predictor band required")
    if TARGET_BAND in predictors:
        raise InvariantError(f"{TARGET_BAND} cannot predict itself")
    target = scene.band(TARGET_BAND)
    for name in predictors:
        if not scene.has_band(name):
            raise MissingBandError(f"predictor band {name!r} not in scene")

    sel = _fit_selection(scene.shape, background_mask)
    y = target.values.reshape(-1)[sel].astype(np.float64)
    n_params = len(predictors) + 1
    if y.size < n_params:
        raise InvariantError(
            f"regression needs >= {n_params} background pixels, got {y.size}"
        )
    design = np.empty((y.size, n_params), dtype=np.float64)
    for j, name in enumerate(predictors):
        design[:, j] = scene.band(name).values.reshape(-1)[sel]
    design[:, -1] = 1.0

    solution, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < n_params:
        raise DegenerateFitError(
            f"design matrix rank {rank} < {n_params}: collinear predictors"
        )
    residuals = design @ solution - y
    rms = float(np.sqrt(np.mean(residuals * residuals)))
    return RegressionModel(
        predictor_bands=predictors,
        coefficients=tuple(float(b) for b in solution[:-1]),
        intercept=float(solution[-1]),
        residual_rms=rms,
    )


def predict_r12(model: RegressionModel, scene: Scene) -> Field:
    """Apply the background model: R12_hat = sum(beta_i * band_i) + intercept."""
    out = np.full(scene.shape, model.intercept, dtype=np.float64)
    for name, beta in zip(model.predictor_bands, model.coefficients):
        out += beta * scene.band(name).values.astype(np.float64)
    return Field(out)


def sanchez_ratio(
    r12: Field,
    r12_hat: Field,
    fit_mask: Mask | None = None,
    r11_floor: float = R11_FLOOR,
) -> tuple[Field, int]:
    """Ratio of B12 against its regression prediction: S = V(R12, R12_hat).

    A fresh scale factor c' is fit against the predicted reference (over
    ``fit_mask``), then the Varon form is evaluated with R12_hat in the
    reference role. Returns the field and the floored-pixel count.
    """
    scale = fit_scale_c(r12, r12_hat, fit_mask)
    return varon_ratio(r12, r12_hat, scale, r11_floor=r11_floor)


# ---------------------------------------------------------------------------
# Stacking and normalization
# ---------------------------------------------------------------------------


def stack_vsv(v: Field, s: Field) -> FeatureStack:
    """Assemble the [V, S, V] stack; V is duplicated, not copied."""
    return FeatureStack(v=v, s=s)


def zscore(stack: FeatureStack) -> FeatureStack:
    """Z-score each channel with its own per-scene population statistics.

    x' = (x - mean) / max(std, Z_SIGMA_FLOOR); a constant channel therefore
    maps to all zeros. The applied (mean, std) pairs are recorded on the
    returned stack. Channels 0 and 2 share their statistics, preserving
    their bit-equality.
    """
    if stack.channels[0].values.size < 2:
        raise InvariantError("z-score needs >= 2 pixels per channel")

    def norm(field: Field) -> tuple[Field, float, float]:
        vals = field.values.astype(np.float64)
        mu = float(vals.mean())
        sigma = float(vals.std())  # population sigma
        div = max(sigma, Z_SIGMA_FLOOR)
        return Field((vals - mu) / div), mu, div

    v_n, v_mu, v_sd = norm(stack.channels[0])
    s_n, s_mu, s_sd = norm(stack.channels[1])
    return FeatureStack(
        v=v_n,
        s=s_n,
        v_dup=v_n,
        normalization=((v_mu, v_sd), (s_mu, s_sd), (v_mu, v_sd)),
    )
