"""Synthetic scene generation: backgrounds, sensor noise, plume injection.

Backgrounds are built per band as Gaussian-smoothed white noise (a cheap
stand-in for natural surface heterogeneity) with B12 then *derived* from an
exactly linear relation on the other bands. That exact relation is what
makes the generator useful for verification: with no plume and no noise the
Sanchez ratio of a generated scene is zero to rounding.

Plumes follow a Beer-Lambert-style multiplicative model: a Gaussian
enhancement field E is applied as ``B12 *= exp(-kappa * E)``, suppressing
B12 and leaving every other band untouched. Ground truth is the exact pixel
set where E reaches ``label_threshold`` of its peak. kappa and E are
dimensionless contrast knobs, not calibrated column concentrations.

Randomness contract: every draw comes from numpy's PCG64 generator seeded
from the relevant spec, with a fixed order (bands in config order filled
row-major; per artifact: x then y). Same seed, same platform-independent
output.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .enhance import RegressionModel, predict_r12
from .raster import Field, Mask, Scene
from .validation import InvariantError


@dataclass(frozen=True)
class NoiseSpec:
    """Additive perturbations applied to the derived B12 band."""

    gaussian_sigma: float = 0.0
    artifact_count: int = 0
    artifact_radius_px: float = 3.0
    artifact_amplitude: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.gaussian_sigma < 0:
            raise InvariantError("gaussian_sigma must be >= 0")
        if self.artifact_count < 0:
            raise InvariantError("artifact_count must be >= 0")
        if self.artifact_radius_px <= 0:
            raise InvariantError("artifact_radius_px must be > 0")
        for name in ("gaussian_sigma", "artifact_radius_px", "artifact_amplitude"):
            if not math.isfinite(getattr(self, name)):
                raise InvariantError(f"{name} must be finite")

    def to_json(self) -> dict:
        return {
            "gaussian_sigma": self.gaussian_sigma,
            "artifact_count": self.artifact_count,
            "artifact_radius_px": self.artifact_radius_px,
            "artifact_amplitude": self.artifact_amplitude,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NoiseSpec":
        return cls(
            gaussian_sigma=float(obj.get("gaussian_sigma", 0.0)),
            artifact_count=int(obj.get("artifact_count", 0)),
            artifact_radius_px=float(obj.get("artifact_radius_px", 3.0)),
            artifact_amplitude=float(obj.get("artifact_amplitude", 0.0)),
            seed=None if obj.get("seed") is None else int(obj["seed"]),
        )


@dataclass(frozen=True)
class PlumeSpec:
    """One synthetic plume: Gaussian enhancement footprint on B12."""

    center_xy: tuple[float, float]
    sigma_px: float
    peak_enhancement: float
    absorption_kappa: float
    label_threshold: float = 0.5
    source_id: int = 1

    def __post_init__(self):
        if self.sigma_px <= 0:
            raise InvariantError("sigma_px must be > 0")
        if self.peak_enhancement <= 0:
            raise InvariantError("peak_enhancement must be > 0")
        if self.absorption_kappa <= 0:
            raise InvariantError("absorption_kappa must be > 0")
        if not 0.0 < self.label_threshold < 1.0:
            raise InvariantError("label_threshold must be in (0, 1)")
        if not 1 <= self.source_id <= 255:
            raise InvariantError("source_id must be in 1..255")

    def to_json(self) -> dict:
        return {
            "center_xy": list(self.center_xy),
            "sigma_px": self.sigma_px,
            "peak_enhancement": self.peak_enhancement,
            "absorption_kappa": self.absorption_kappa,
            "label_threshold": self.label_threshold,
            "source_id": self.source_id,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PlumeSpec":
        return cls(
            center_xy=(float(obj["center_xy"][0]), float(obj["center_xy"][1])),
            sigma_px=float(obj["sigma_px"]),
            peak_enhancement=float(obj["peak_enhancement"]),
            absorption_kappa=float(obj["absorption_kappa"]),
            label_threshold=float(obj.get("label_threshold", 0.5)),
            source_id=int(obj.get("source_id", 1)),
        )


@dataclass(frozen=True)
class BandTexture:
    """Smoothed-noise texture parameters for one generated band."""

    base_level: float
    amplitude: float = 0.0
    correlation_px: float = 0.0

    def __post_init__(self):
        if self.base_level < 0:
            raise InvariantError("base_level must be >= 0")
        if self.amplitude < 0:
            raise InvariantError("amplitude must be >= 0")
        if self.correlation_px < 0:
            raise InvariantError("correlation_px must be >= 0")


@dataclass(frozen=True)
class SceneConfig:
    """Full recipe for one generated (Scene, Mask) pair."""

    width: int
    height: int
    textures: dict[str, BandTexture]
    b12_coefficients: dict[str, float]
    b12_intercept: float = 0.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    plumes: tuple[PlumeSpec, ...] = ()
    seed: int = 0
    pixel_size_m: float = 20.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvariantError("scene dimensions must be >= 1")
        if not self.textures:
            raise InvariantError("at least one textured band required")
        if "B12" in self.textures:
            raise InvariantError("B12 is derived from the linear relation, not textured")
        for name in self.b12_coefficients:
            if name not in self.textures:
                raise InvariantError(f"B12 relation uses unknown band {name!r}")
        ids = [p.source_id for p in self.plumes]
        if len(ids) != len(set(ids)):
            raise InvariantError("duplicate plume source_id in config")

    @property
    def band_names(self) -> list[str]:
        return list(self.textures) + ["B12"]

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "seed": self.seed,
            "pixel_size_m": self.pixel_size_m,
            "bands": {
                name: {
                    "base_level": t.base_level,
                    "amplitude": t.amplitude,
                    "correlation_px": t.correlation_px,
                }
                for name, t in self.textures.items()
            },
            "b12": {
                "coefficients": dict(self.b12_coefficients),
                "intercept": self.b12_intercept,
            },
            "noise": self.noise.to_json(),
            "plumes": [p.to_json() for p in self.plumes],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SceneConfig":
        textures = {
            name: BandTexture(
                base_level=float(t["base_level"]),
                amplitude=float(t.get("amplitude", 0.0)),
                correlation_px=float(t.get("correlation_px", 0.0)),
            )
            for name, t in obj["bands"].items()
        }
        b12 = obj.get("b12", {})
        return cls(
            width=int(obj["width"]),
            height=int(obj["height"]),
            textures=textures,
            b12_coefficients={k: float(v) for k, v in b12.get("coefficients", {}).items()},
            b12_intercept=float(b12.get("intercept", 0.0)),
            noise=NoiseSpec.from_json(obj.get("noise", {})),
            plumes=tuple(PlumeSpec.from_json(p) for p in obj.get("plumes", [])),
            seed=int(obj.get("seed", 0)),
            pixel_size_m=float(obj.get("pixel_size_m", 20.0)),
        )


# ---------------------------------------------------------------------------
# Background machinery
# ---------------------------------------------------------------------------


def background_mask_percentile(ratio_map: Field, p_lo: float, p_hi: float) -> Mask:
    """Mark the central [Q(p_lo), Q(p_hi)] percentile band as background (1).

    Percentiles use the nearest-rank definition Q(p) = sorted value at rank
    ceil(p*n/100), so small cases are exactly predictable. Pixels outside
    the band (ratio outliers, methane suspects) get 0.
    """
    if not 0 <= p_lo < p_hi <= 100:
        raise InvariantError(f"need 0 <= p_lo < p_hi <= 100, got ({p_lo}, {p_hi})")
    values = ratio_map.values.reshape(-1)
    if values.size == 0:
        raise InvariantError("cannot threshold an empty field")
    ordered = np.sort(values)
    n = values.size

    def q(p: float) -> float:
        rank = max(1, math.ceil(p * n / 100.0))
        return float(ordered[min(rank, n) - 1])

    lo, hi = q(p_lo), q(p_hi)
    inside = (ratio_map.values >= lo) & (ratio_map.values <= hi)
    return Mask(inside.astype(np.uint8))


def simulate_clean_b12(scene: Scene, model: RegressionModel) -> Field:
    """Predicted methane-free B12 from the background regression.

    The prediction tracks the predictor bands, so natural variability
    survives; a degenerate intercept-only model collapses to a constant
    fill and draws a warning.
    """
    clean = predict_r12(model, scene)
    if all(beta == 0.0 for beta in model.coefficients):
        warnings.warn(
            "background model has zero coefficients: clean B12 is a constant "
            "fill and loses natural variability",
            stacklevel=2,
        )
    return clean


def add_gaussian_noise(field_in: Field, sigma: float, seed: int) -> Field:
    """Add i.i.d. zero-mean Gaussian noise, clamping the result at 0.

    Deterministic for a given seed (PCG64, one row-major draw per pixel).
    sigma=0 returns a bit-identical copy.
    """
    if sigma < 0:
        raise InvariantError("sigma must be >= 0")
    if sigma == 0:
        return Field(field_in.values)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, field_in.shape)
    out = np.maximum(field_in.values.astype(np.float64) + noise, 0.0)
    return Field(out)


def add_cluster_artifacts(field_in: Field, spec: NoiseSpec) -> tuple[Field, Mask]:
    """Superimpose Gaussian bumps mimicking clustered sensor artifacts.

    Bump i sits at a uniformly drawn integer pixel (x then y per draw), has
    spatial sigma ``artifact_radius_px`` and amplitude ``+amp`` for even i,
    ``-amp`` for odd i. The footprint mask flags pixels where any bump
    exceeds 5% of the amplitude. The perturbed field is not clamped.
    """
    h, w = field_in.shape
    out = field_in.values.astype(np.float64)
    footprint = np.zeros((h, w), dtype=bool)
    if spec.artifact_count == 0:
        return Field(out), Mask(footprint.astype(np.uint8))

    rng = np.random.default_rng(spec.seed if spec.seed is not None else 0)
    ys, xs = np.mgrid[0:h, 0:w]
    amp = spec.artifact_amplitude
    two_r2 = 2.0 * spec.artifact_radius_px**2
    for i in range(spec.artifact_count):
        cx = int(rng.integers(0, w))
        cy = int(rng.integers(0, h))
        sign = 1.0 if i % 2 == 0 else -1.0
        bump = sign * amp * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / two_r2)
        out = out + bump
        if amp != 0:
            footprint |= np.abs(bump) > 0.05 * abs(amp)
    return Field(out), Mask(footprint.astype(np.uint8))


# ---------------------------------------------------------------------------
# Plume injection and full scenes
# ---------------------------------------------------------------------------


# Optical depths this small leave B12 numerically unchanged at f32
# precision; such pixels are never ground truth even inside the
# relative-threshold footprint (a vanishing plume labels nothing).
MIN_LABEL_ABSORPTION = 1e-12


def _enhancement_field(spec: PlumeSpec, height: int, width: int) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width]
    cx, cy = spec.center_xy
    d2 = (xs - cx) ** 2 + (ys - cy) ** 2
    return spec.peak_enhancement * np.exp(-d2 / (2.0 * spec.sigma_px**2))


def inject_plume(
    scene: Scene, spec: PlumeSpec, existing_mask: Mask | None = None
) -> tuple[Scene, Mask]:
    """Suppress B12 under a Gaussian plume and return the updated truth mask.

    B12 is multiplied by exp(-kappa * E); no other band changes. The mask
    labels exactly the pixels with E >= label_threshold * peak with
    ``source_id`` (overwriting overlap pixels of earlier sources when an
    existing mask is merged). A footprint extending past the scene edge is
    clipped and flagged with a warning.
    """
    b12 = scene.band("B12")
    h, w = scene.shape
    if existing_mask is not None and np.any(existing_mask.labels == spec.source_id):
        raise InvariantError(f"source_id {spec.source_id} already present in mask")

    enhancement = _enhancement_field(spec, h, w)
    plume_pixels = (enhancement >= spec.label_threshold * spec.peak_enhancement) & (
        spec.absorption_kappa * enhancement >= MIN_LABEL_ABSORPTION
    )

    r_label = spec.sigma_px * math.sqrt(2.0 * math.log(1.0 / spec.label_threshold))
    cx, cy = spec.center_xy
    if cx - r_label < 0 or cy - r_label < 0 or cx + r_label > w - 1 or cy + r_label > h - 1:
        warnings.warn(
            f"plume source {spec.source_id} footprint clipped at scene edge",
            stacklevel=2,
        )

    suppressed = b12.values.astype(np.float64) * np.exp(
        -spec.absorption_kappa * enhancement
    )
    new_scene = scene.with_band("B12", Field(suppressed))

    labels = (
        existing_mask.labels.copy()
        if existing_mask is not None
        else np.zeros((h, w), dtype=np.uint8)
    )
    labels[plume_pixels] = spec.source_id
    return new_scene, Mask(labels)


def generate_scene(config: SceneConfig) -> tuple[Scene, Mask]:
    """Build a full synthetic (Scene, Mask) pair from a config.

    Textured bands are drawn in config order from PCG64(config.seed); B12
    is then set to the exact linear relation, perturbed per the NoiseSpec
    (Gaussian noise seeded with noise.seed or config.seed+1; artifacts with
    that seed + 1), clamped at 0, and finally each plume is injected in
    list order. Bit-identical output for identical configs.
    """
    rng = np.random.default_rng(config.seed)
    h, w = config.height, config.width

    bands: dict[str, Field] = {}
    for name, tex in config.textures.items():
        white = rng.standard_normal((h, w))
        if tex.correlation_px > 0:
            smooth = gaussian_filter(white, sigma=tex.correlation_px, mode="reflect")
            sd = smooth.std()
            if sd > 0:
                smooth = smooth / sd
        else:
            smooth = white
        values = tex.base_level + tex.amplitude * smooth
        if values.min() < 0:
            raise InvariantError(
                f"texture for {name} produced negative radiance; raise base_level"
            )
        bands[name] = Field(values)

    b12 = np.full((h, w), config.b12_intercept, dtype=np.float64)
    for name, coeff in config.b12_coefficients.items():
        b12 += coeff * bands[name].values.astype(np.float64)
    if b12.min() < 0:
        raise InvariantError("B12 relation produced negative radiance")

    b12_field = Field(b12)
    noise = config.noise
    noise_seed = noise.seed if noise.seed is not None else config.seed + 1
    if noise.gaussian_sigma > 0:
        b12_field = add_gaussian_noise(b12_field, noise.gaussian_sigma, noise_seed)
    if noise.artifact_count > 0:
        b12_field, _ = add_cluster_artifacts(
            b12_field, replace(noise, seed=noise_seed + 1)
        )
        b12_field = Field(np.maximum(b12_field.values, 0.0))

    bands["B12"] = b12_field
    scene = Scene(bands, pixel_size_m=config.pixel_size_m)

    mask = Mask(np.zeros((h, w), dtype=np.uint8))
    for plume in config.plumes:
        scene, mask = inject_plume(scene, plume, existing_mask=mask)
    return scene, mask
