"""Dice/IoU from integer confusion counts, matching the scoring toolkit.

Same conventions as the evaluation side: counts are exact integers, the
empty-vs-empty case scores 1.0, micro aggregates come from summed counts
and macro from per-sample means. Predictions binarize at 0.5.
"""

from __future__ import annotations

import numpy as np


def confusion_counts(pred: np.ndarray, target: np.ndarray) -> tuple[int, int, int, int]:
    p = pred != 0
    g = target != 0
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(np.count_nonzero(~p & ~g))
    return tp, fp, fn, tn


def dice_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2.0 * tp / denom


def iou_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = tp + fp + fn
    return 1.0 if denom == 0 else tp / denom


class MetricAccumulator:
    """Accumulates per-sample confusions into micro and macro rollups."""

    def __init__(self):
        self.tp = self.fp = self.fn = self.tn = 0
        self.dices: list[float] = []
        self.ious: list[float] = []

    def add(self, pred: np.ndarray, target: np.ndarray) -> None:
        tp, fp, fn, tn = confusion_counts(pred, target)
        self.tp += tp
        self.fp += fp
        self.fn += fn
        self.tn += tn
        self.dices.append(dice_from_counts(tp, fp, fn))
        self.ious.append(iou_from_counts(tp, fp, fn))

    def micro_dice(self) -> float:
        return dice_from_counts(self.tp, self.fp, self.fn)

    def micro_iou(self) -> float:
        return iou_from_counts(self.tp, self.fp, self.fn)

    def macro_dice(self) -> float:
        return float(np.mean(self.dices)) if self.dices else 1.0

    def macro_iou(self) -> float:
        return float(np.mean(self.ious)) if self.ious else 1.0
