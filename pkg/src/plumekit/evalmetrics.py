"""Segmentation scoring: confusion counts, Dice/IoU, losses, difference maps.

Conventions that matter here and are easy to get wrong elsewhere:

* A sample where prediction and truth are both empty scores 1.0 on Dice
  and IoU. Plume-free tiles predicted clean are *correct*, and the metric
  rewards them; conventions differ across toolkits, so this one is pinned.
* Micro aggregation computes scores from summed confusion counts; macro
  averages per-sample scores. Under micro aggregation the exact identity
  ``iou = dice / (2 - dice)`` holds; a published (F1, IoU) pair violating
  it implies per-sample averaging. Both aggregations are reported.
* The losses here are reference *values* for scoring and cross-checks;
  no gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Manifest
from .raster import Field, Mask, read_brf
from .validation import InvariantError, PlumekitError, check_same_shape

PROB_CLAMP = 1e-7

# Difference-map codes (see raster.DIFFMAP_PALETTE for colors)
TN, TP, FP, FN = 0, 1, 2, 3


@dataclass(frozen=True)
class Confusion:
    """Pixel counts of a binary prediction against binary truth."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise InvariantError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tn + other.tn,
        )


@dataclass(frozen=True)
class LossConfig:
    """Focal + Dice loss weights; defaults follow common practice."""

    alpha: float = 0.25
    gamma: float = 2.0
    lambda_focal: float = 1.0
    lambda_dice: float = 1.0
    dice_eps: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise InvariantError("alpha must be in (0, 1]")
        if self.gamma < 0:
            raise InvariantError("gamma must be >= 0")
        if self.lambda_focal < 0 or self.lambda_dice < 0:
            raise InvariantError("loss weights must be >= 0")
        if self.lambda_focal + self.lambda_dice <= 0:
            raise InvariantError("at least one loss weight must be positive")
        if self.dice_eps <= 0:
            raise InvariantError("dice_eps must be > 0")


def confusion(pred: Mask, gt: Mask) -> Confusion:
    """Exact per-pixel confusion counts (masks binarized as nonzero)."""
    check_same_shape(pred, gt, "pred/gt masks")
    p = pred.labels != 0
    g = gt.labels != 0
    return Confusion(
        tp=int(np.count_nonzero(p & g)),
        fp=int(np.count_nonzero(p & ~g)),
        fn=int(np.count_nonzero(~p & g)),
        tn=int(np.count_nonzero(~p & ~g)),
    )


def dice_f1(c: Confusion) -> float:
    """Dice coefficient 2TP/(2TP+FP+FN); empty vs empty scores 1.0."""
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return 2.0 * c.tp / denom


def iou(c: Confusion) -> float:
    """Intersection over union TP/(TP+FP+FN); empty vs empty scores 1.0."""
    denom = c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return c.tp / denom


# ---------------------------------------------------------------------------
# Reference losses
# ---------------------------------------------------------------------------


def _check_probs(probs: Field, gt: Mask) -> tuple[np.ndarray, np.ndarray]:
    check_same_shape(probs, gt, "probs/gt")
    p = probs.values.astype(np.float64)
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise InvariantError("probabilities must lie in [0, 1]")
    return p, gt.labels != 0


def focal_loss(probs: Field, gt: Mask, cfg: LossConfig) -> float:
    """Mean of -alpha * (1 - p_t)^gamma * ln(p_t) over all pixels.

    p_t is the probability assigned to the true class; probabilities are
    clamped to [PROB_CLAMP, 1 - PROB_CLAMP] before the log.
    """
    p, g = _check_probs(probs, gt)
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    p_t = np.where(g, p, 1.0 - p)
    per_pixel = -cfg.alpha * (1.0 - p_t) ** cfg.gamma * np.log(p_t)
    return float(per_pixel.mean())


def dice_loss(probs: Field, gt: Mask, eps: float = 1.0) -> float:
    """Soft-Dice loss 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps)."""
    if eps <= 0:
        raise InvariantError("eps must be > 0")
    p, g = _check_probs(probs, gt)
    gf = g.astype(np.float64)
    inter = float(np.sum(p * gf))
    return 1.0 - (2.0 * inter + eps) / (float(p.sum()) + float(gf.sum()) + eps)


def combined_loss(probs: Field, gt: Mask, cfg: LossConfig) -> float:
    """lambda_focal * focal + lambda_dice * dice, linear in both weights."""
    return cfg.lambda_focal * focal_loss(probs, gt, cfg) + cfg.lambda_dice * dice_loss(
        probs, gt, cfg.dice_eps
    )


# ---------------------------------------------------------------------------
# Difference map
# ---------------------------------------------------------------------------


def difference_map(pred: Mask, gt: Mask) -> Mask:
    """Per-pixel agreement codes: TN=0, TP=1, FP=2, FN=3.

    Rendered through raster.export_image(..., colormap="diffmap") these
    come out black, green, red and yellow respectively. The code histogram
    equals the confusion counts exactly.
    """
    check_same_shape(pred, gt, "pred/gt masks")
    p = pred.labels != 0
    g = gt.labels != 0
    codes = np.zeros(p.shape, dtype=np.uint8)
    codes[p & g] = TP
    codes[p & ~g] = FP
    codes[~p & g] = FN
    return Mask(codes)


# ---------------------------------------------------------------------------
# Manifest-level evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleScore:
    id: str
    dice: float
    iou: float
    confusion: Confusion


@dataclass(frozen=True)
class EvalReport:
    """Per-sample scores plus micro (summed counts) and macro (mean) rollups."""

    samples: tuple[SampleScore, ...]
    micro: Confusion
    macro_dice: float
    macro_iou: float

    @property
    def micro_dice(self) -> float:
        return dice_f1(self.micro)

    @property
    def micro_iou(self) -> float:
        return iou(self.micro)

    @property
    def count(self) -> int:
        return len(self.samples)

    def to_json(self) -> dict:
        return {
            "samples": [
                {
                    "id": s.id,
                    "dice": s.dice,
                    "iou": s.iou,
                    "tp": s.confusion.tp,
                    "fp": s.confusion.fp,
                    "fn": s.confusion.fn,
                    "tn": s.confusion.tn,
                }
                for s in self.samples
            ],
            "micro": {
                "dice": self.micro_dice,
                "iou": self.micro_iou,
                "tp": self.micro.tp,
                "fp": self.micro.fp,
                "fn": self.micro.fn,
                "tn": self.micro.tn,
            },
            "macro": {"dice": self.macro_dice, "iou": self.macro_iou},
            "count": self.count,
        }

    def to_text(self) -> str:
        lines = [
            f"{'sample':<40} {'dice':>8} {'iou':>8} {'tp':>8} {'fp':>8} {'fn':>8} {'tn':>10}"
        ]
        for s in self.samples:
            lines.append(
                f"{s.id:<40} {s.dice:8.4f} {s.iou:8.4f} "
                f"{s.confusion.tp:8d} {s.confusion.fp:8d} {s.confusion.fn:8d} {s.confusion.tn:10d}"
            )
        lines.append(
            f"{'micro':<40} {self.micro_dice:8.4f} {self.micro_iou:8.4f} "
            f"{self.micro.tp:8d} {self.micro.fp:8d} {self.micro.fn:8d} {self.micro.tn:10d}"
        )
        lines.append(f"{'macro':<40} {self.macro_dice:8.4f} {self.macro_iou:8.4f}")
        return "\n".join(lines)


def score_pairs(pairs: list[tuple[str, Mask, Mask]]) -> EvalReport:
    """Score (id, pred, gt) pairs and aggregate micro + macro."""
    if not pairs:
        raise PlumekitError("nothing to evaluate")
    samples = []
    total = Confusion()
    for sample_id, pred, gt in pairs:
        c = confusion(pred, gt)
        samples.append(SampleScore(id=sample_id, dice=dice_f1(c), iou=iou(c), confusion=c))
        total = total + c
    return EvalReport(
        samples=tuple(samples),
        micro=total,
        macro_dice=float(np.mean([s.dice for s in samples])),
        macro_iou=float(np.mean([s.iou for s in samples])),
    )


def evaluate_manifest(
    manifest: Manifest, predictions_dir, base_dir=None, split: str = "val"
) -> EvalReport:
    """Score prediction masks named ``<sample_id>.brf`` against a manifest split.

    Every sample in the split must have a prediction file; missing files
    are all listed in one error.
    """
    records = manifest.split_records(split)
    if not records:
        raise PlumekitError(f"manifest has no samples in split {split!r}")
    pred_dir = Path(predictions_dir)
    base = Path(base_dir) if base_dir else Path(".")

    missing = [r.id for r in records if not (pred_dir / f"{r.id}.brf").exists()]
    if missing:
        raise PlumekitError(f"missing prediction files for: {missing}")

    pairs = []
    for r in records:
        pred = read_brf(pred_dir / f"{r.id}.brf")
        gt = read_brf(base / r.mask_path)
        if not isinstance(pred, Mask) or not isinstance(gt, Mask):
            raise PlumekitError(f"sample {r.id}: prediction and truth must be masks")
        pairs.append((r.id, pred, gt))
    return score_pairs(pairs)
