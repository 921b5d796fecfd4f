"""Scikit-learn style estimators wrapping the enhancement and detection ops.

These classes exist so the per-scene pipeline composes with the wider
ecosystem (get_params/set_params, clone, Pipeline): ``FeatureEnhancer`` is
the fit/transform face of the ratio math in :mod:`plumekit.enhance`, and
``PlumeDetector`` is the predict face of :mod:`plumekit.detect`. X is a
Scene (or FeatureStack), not a samples-by-features matrix.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import enhance
from .detect import DetectorConfig, detect_plumes
from .enhance import FeatureStack
from .raster import Mask, Scene
from .synth import background_mask_percentile
from .validation import InvariantError


class FeatureEnhancer(TransformerMixin, BaseEstimator):
    """Learn per-scene calibration and produce [V, S, V] feature stacks.

    fit() estimates, on one scene, the Varon scale factor and the
    background regression over an adaptive percentile background mask:
    a provisional V over all pixels selects the central
    [p_lo, p_hi]-percentile pixels as background, then the scale factor
    and regression are refit on that support. transform() applies the
    fitted calibration to a scene and (optionally) z-scores the stack.

    Parameters
    ----------
    predictor_bands : bands regressed against B12 for the Sanchez reference
    p_lo, p_hi : percentile window defining background pixels
    normalize : z-score the output stack per scene
    r11_floor : reference radiance floor guarding the ratio division
    """

    def __init__(
        self,
        predictor_bands=("B11",),
        p_lo=2.5,
        p_hi=97.5,
        normalize=True,
        r11_floor=enhance.R11_FLOOR,
    ):
        self.predictor_bands = predictor_bands
        self.p_lo = p_lo
        self.p_hi = p_hi
        self.normalize = normalize
        self.r11_floor = r11_floor

    def fit(self, X: Scene, y=None):
        if not isinstance(X, Scene):
            raise InvariantError("FeatureEnhancer.fit expects a Scene")
        r11 = X.band("B11")
        r12 = X.band("B12")

        c_all = enhance.fit_scale_c(r12, r11)
        v_all, _ = enhance.varon_ratio(r12, r11, c_all, r11_floor=self.r11_floor)
        self.background_mask_ = background_mask_percentile(v_all, self.p_lo, self.p_hi)

        self.scale_ = enhance.fit_scale_c(r12, r11, self.background_mask_)
        self.regression_ = enhance.fit_background_regression(
            X, self.background_mask_, tuple(self.predictor_bands)
        )
        r12_hat = enhance.predict_r12(self.regression_, X)
        self.sanchez_scale_ = enhance.fit_scale_c(r12, r12_hat, self.background_mask_)
        return self

    def transform(self, X: Scene) -> FeatureStack:
        check_is_fitted(self, "scale_")
        if not isinstance(X, Scene):
            raise InvariantError("FeatureEnhancer.transform expects a Scene")
        r11 = X.band("B11")
        r12 = X.band("B12")
        v, self.n_floored_v_ = enhance.varon_ratio(
            r12, r11, self.scale_, r11_floor=self.r11_floor
        )
        r12_hat = enhance.predict_r12(self.regression_, X)
        s, self.n_floored_s_ = enhance.varon_ratio(
            r12, r12_hat, self.sanchez_scale_, r11_floor=self.r11_floor
        )
        stack = enhance.stack_vsv(v, s)
        if self.normalize:
            stack = enhance.zscore(stack)
        return stack


class PlumeDetector(BaseEstimator):
    """Robust-threshold detector with a predict() face.

    Stateless: fit() only validates parameters. predict() maps a
    FeatureStack to a binary Mask via detect.detect_plumes.
    """

    def __init__(self, k_sigma=4.0, channel="S", min_area_px=1, connectivity=8):
        self.k_sigma = k_sigma
        self.channel = channel
        self.min_area_px = min_area_px
        self.connectivity = connectivity

    def _config(self) -> DetectorConfig:
        return DetectorConfig(
            k_sigma=self.k_sigma,
            channel=self.channel,
            min_area_px=self.min_area_px,
            connectivity=self.connectivity,
        )

    def fit(self, X=None, y=None):
        self.config_ = self._config()  # validates parameter ranges
        return self

    def predict(self, X: FeatureStack) -> Mask:
        if not isinstance(X, FeatureStack):
            raise InvariantError("PlumeDetector.predict expects a FeatureStack")
        return detect_plumes(X, self._config())
