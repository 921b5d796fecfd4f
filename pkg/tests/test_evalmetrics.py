"""Metric identities, reference losses, difference maps, report aggregation."""

import math
from fractions import Fraction

import numpy as np
import pytest

from plumekit.evalmetrics import (
    FN,
    FP,
    TN,
    TP,
    Confusion,
    LossConfig,
    combined_loss,
    confusion,
    dice_f1,
    dice_loss,
    difference_map,
    evaluate_manifest,
    focal_loss,
    iou,
    score_pairs,
)
from plumekit.raster import Field, Mask
from plumekit.validation import InvariantError, PlumekitError, ShapeMismatchError


def _mask(rows):
    return Mask(np.array(rows, dtype=np.uint8))


# ---------------------------------------------------------------------------
# confusion
# ---------------------------------------------------------------------------


def test_confusion_all_ones():
    ones = _mask([[1, 1], [1, 1]])
    c = confusion(ones, ones)
    assert (c.tp, c.fp, c.fn, c.tn) == (4, 0, 0, 0)


def test_confusion_all_empty():
    empty = _mask([[0, 0], [0, 0]])
    c = confusion(empty, empty)
    assert (c.tp, c.fp, c.fn, c.tn) == (0, 0, 0, 4)


def test_confusion_enumerated_1x4():
    pred = _mask([[1, 1, 0, 0]])
    gt = _mask([[0, 1, 1, 0]])
    c = confusion(pred, gt)
    assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 1)
    assert c.total == 4


def test_confusion_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        confusion(_mask([[1]]), _mask([[1, 0]]))


def test_confusion_permutation_invariance():
    rng = np.random.default_rng(0)
    pred = rng.integers(0, 2, 36, dtype=np.uint8)
    gt = rng.integers(0, 2, 36, dtype=np.uint8)
    perm = rng.permutation(36)
    c1 = confusion(Mask(pred.reshape(6, 6)), Mask(gt.reshape(6, 6)))
    c2 = confusion(Mask(pred[perm].reshape(6, 6)), Mask(gt[perm].reshape(6, 6)))
    assert c1 == c2


# ---------------------------------------------------------------------------
# dice / iou
# ---------------------------------------------------------------------------


def test_perfect_masks_score_one():
    c = Confusion(tp=9, fp=0, fn=0, tn=1)
    assert dice_f1(c) == 1.0 and iou(c) == 1.0


def test_empty_empty_scores_one():
    c = Confusion(tn=10)
    assert dice_f1(c) == 1.0 and iou(c) == 1.0


def test_hand_computed_dice_third_iou():
    c = Confusion(tp=1, fp=1, fn=1, tn=0)
    assert dice_f1(c) == pytest.approx(0.5, abs=1e-12)
    assert iou(c) == pytest.approx(1 / 3, abs=1e-12)
    assert iou(c) == pytest.approx(dice_f1(c) / (2 - dice_f1(c)), abs=1e-12)


def test_micro_identity_exact_in_rationals():
    # iou == dice / (2 - dice) exactly, verified in rational arithmetic,
    # and to a couple of ulps in floats
    rng = np.random.default_rng(42)
    for _ in range(2000):
        tp, fp, fn = (int(v) for v in rng.integers(0, 10**6, 3))
        if tp + fp + fn == 0:
            continue
        c = Confusion(tp=tp, fp=fp, fn=fn)
        d = Fraction(2 * tp, 2 * tp + fp + fn)
        assert Fraction(tp, tp + fp + fn) == d / (2 - d)
        assert iou(c) == pytest.approx(dice_f1(c) / (2 - dice_f1(c)), rel=1e-14)


def test_iou_never_exceeds_dice():
    rng = np.random.default_rng(43)
    for _ in range(500):
        tp, fp, fn, tn = (int(v) for v in rng.integers(0, 100, 4))
        c = Confusion(tp=tp, fp=fp, fn=fn, tn=tn)
        assert 0.0 <= iou(c) <= dice_f1(c) <= 1.0


def test_published_pair_violates_micro_identity():
    # a (f1, iou) pair of (0.7720, 0.7095) cannot come from one summed
    # confusion: 0.7720/(2-0.7720) = 0.6287, not 0.7095. Macro averaging
    # can produce such pairs, which is why both rollups are reported.
    f1 = 0.7720
    assert f1 / (2 - f1) == pytest.approx(0.6287, abs=5e-5)
    assert abs(f1 / (2 - f1) - 0.7095) > 0.05


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def test_focal_confident_prediction_near_zero():
    probs = Field(np.ones((4, 4)))
    gt = _mask(np.ones((4, 4)))
    loss = focal_loss(probs, gt, LossConfig(alpha=1.0, gamma=0.0))
    assert 0 < loss <= 1.2e-6  # clamp floor value


def test_focal_reduces_to_bce():
    rng = np.random.default_rng(1)
    probs = Field(rng.uniform(0.01, 0.99, (8, 8)))
    gt = Mask(rng.integers(0, 2, (8, 8), dtype=np.uint8))
    got = focal_loss(probs, gt, LossConfig(alpha=1.0, gamma=0.0))
    # independent BCE computation
    p = np.clip(probs.values.astype(np.float64), 1e-7, 1 - 1e-7)
    g = gt.labels.astype(np.float64)
    bce = float(np.mean(-(g * np.log(p) + (1 - g) * np.log(1 - p))))
    assert got == pytest.approx(bce, abs=1e-9)


def test_focal_hand_computed_single_pixel():
    probs = Field([[0.9]])
    gt = _mask([[1]])
    got = focal_loss(probs, gt, LossConfig(alpha=0.25, gamma=2.0))
    p = float(np.float32(0.9))  # the probability as actually stored
    want = -0.25 * (1 - p) ** 2 * math.log(p)
    assert got == pytest.approx(want, abs=1e-12)
    assert got == pytest.approx(2.6341e-4, abs=1e-8)


def test_focal_rejects_out_of_range_probs():
    with pytest.raises(InvariantError):
        focal_loss(Field([[1.5]]), _mask([[1]]), LossConfig())


def test_dice_loss_binary_match():
    assert dice_loss(Field([[1.0, 0.0]]), _mask([[1, 0]]), eps=1.0) == pytest.approx(0.0)


def test_dice_loss_empty_agreement():
    assert dice_loss(Field([[0.0]]), _mask([[0]]), eps=1.0) == pytest.approx(0.0)


def test_dice_loss_half_probability():
    got = dice_loss(Field([[0.5]]), _mask([[1]]), eps=1e-6)
    want = 1 - (2 * 0.5 + 1e-6) / (0.5 + 1 + 1e-6)
    assert got == pytest.approx(want, abs=1e-12)
    assert got == pytest.approx(1 / 3, abs=1e-5)


def test_combined_loss_degenerate_weights():
    rng = np.random.default_rng(2)
    probs = Field(rng.uniform(0, 1, (5, 5)))
    gt = Mask(rng.integers(0, 2, (5, 5), dtype=np.uint8))
    only_dice = LossConfig(lambda_focal=0.0, lambda_dice=1.0)
    only_focal = LossConfig(lambda_focal=1.0, lambda_dice=0.0)
    assert combined_loss(probs, gt, only_dice) == dice_loss(probs, gt, only_dice.dice_eps)
    assert combined_loss(probs, gt, only_focal) == focal_loss(probs, gt, only_focal)


def test_combined_loss_linearity():
    rng = np.random.default_rng(3)
    probs = Field(rng.uniform(0, 1, (5, 5)))
    gt = Mask(rng.integers(0, 2, (5, 5), dtype=np.uint8))
    base = LossConfig(lambda_focal=1.0, lambda_dice=1.0)
    f = focal_loss(probs, gt, base)
    d = dice_loss(probs, gt, base.dice_eps)
    assert combined_loss(probs, gt, base) == pytest.approx(f + d, abs=1e-12)
    scaled = LossConfig(lambda_focal=2.0, lambda_dice=0.5)
    assert combined_loss(probs, gt, scaled) == pytest.approx(2 * f + 0.5 * d, abs=1e-12)


def test_loss_config_rejects_zero_weights():
    with pytest.raises(InvariantError):
        LossConfig(lambda_focal=0.0, lambda_dice=0.0)


# ---------------------------------------------------------------------------
# difference map
# ---------------------------------------------------------------------------


def test_difference_map_agreement_codes():
    m = _mask([[1, 0], [0, 1]])
    codes = difference_map(m, m)
    assert set(np.unique(codes.labels)) <= {TN, TP}


def test_difference_map_false_positive_code():
    codes = difference_map(_mask([[1]]), _mask([[0]]))
    assert codes.labels[0, 0] == FP


def test_difference_map_histogram_equals_confusion():
    rng = np.random.default_rng(4)
    for _ in range(20):
        pred = Mask(rng.integers(0, 2, (9, 9), dtype=np.uint8))
        gt = Mask(rng.integers(0, 2, (9, 9), dtype=np.uint8))
        codes = difference_map(pred, gt)
        c = confusion(pred, gt)
        hist = np.bincount(codes.labels.reshape(-1), minlength=4)
        assert (hist[TN], hist[TP], hist[FP], hist[FN]) == (c.tn, c.tp, c.fp, c.fn)


# ---------------------------------------------------------------------------
# report aggregation
# ---------------------------------------------------------------------------


def test_score_pairs_micro_macro():
    tie = (_mask([[1, 1, 0, 0]]), _mask([[0, 1, 1, 0]]))  # tp=1 fp=1 fn=1 tn=1
    perfect = (_mask([[1, 1]]), _mask([[1, 1]]))
    report = score_pairs([("a", *tie), ("b", *perfect)])
    assert report.macro_dice == pytest.approx((0.5 + 1.0) / 2)
    # micro from summed counts: tp=3 fp=1 fn=1
    assert report.micro_dice == pytest.approx(6 / 8)
    assert report.micro_iou == pytest.approx(3 / 5)
    assert report.micro_iou == pytest.approx(report.micro_dice / (2 - report.micro_dice), rel=1e-14)
    assert report.count == 2


def test_report_perfect_predictions():
    rng = np.random.default_rng(5)
    pairs = []
    for i in range(4):
        m = Mask(rng.integers(0, 2, (6, 6), dtype=np.uint8))
        pairs.append((f"p{i}", m, m))
    report = score_pairs(pairs)
    assert report.micro_dice == 1.0 and report.macro_dice == 1.0
    assert report.micro_iou == 1.0 and report.macro_iou == 1.0


def test_report_json_schema():
    report = score_pairs([("x", _mask([[1, 0]]), _mask([[1, 1]]))])
    obj = report.to_json()
    assert set(obj) == {"samples", "micro", "macro", "count"}
    assert set(obj["samples"][0]) == {"id", "dice", "iou", "tp", "fp", "fn", "tn"}
    assert set(obj["micro"]) == {"dice", "iou", "tp", "fp", "fn", "tn"}
    assert "dice" in obj["macro"] and "iou" in obj["macro"]
    assert "micro" in report.to_text()


def test_score_pairs_empty_errors():
    with pytest.raises(PlumekitError):
        score_pairs([])


def test_evaluate_manifest_missing_predictions(tmp_path):
    from plumekit.dataset import Manifest, SampleRecord
    from plumekit.raster import write_brf

    gt = _mask([[1, 0]])
    (tmp_path / "samples").mkdir()
    write_brf(gt, tmp_path / "samples" / "a.mask.brf")
    manifest = Manifest(
        dataset_id="d",
        seed=0,
        config_hash="",
        records=[
            SampleRecord(
                id="a", split="val", stack_path="samples/a.stack.brf",
                mask_path="samples/a.mask.brf", provenance={}, has_plume=True,
            )
        ],
    )
    with pytest.raises(PlumekitError, match="missing prediction"):
        evaluate_manifest(manifest, tmp_path / "preds", base_dir=tmp_path)

    (tmp_path / "preds").mkdir()
    write_brf(gt, tmp_path / "preds" / "a.brf")
    report = evaluate_manifest(manifest, tmp_path / "preds", base_dir=tmp_path)
    assert report.micro_dice == 1.0


def test_evaluate_manifest_empty_split(tmp_path):
    from plumekit.dataset import Manifest

    manifest = Manifest(dataset_id="d", seed=0, config_hash="", records=[])
    with pytest.raises(PlumekitError, match="no samples"):
        evaluate_manifest(manifest, tmp_path)
