"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines. Each criterion pins its tolerance and runtime budget.
"""

import json
import math
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from plumekit import enhance
from plumekit.cli import run
from plumekit.dataset import augment
from plumekit.detect import DetectorConfig, detect_plumes
from plumekit.estimators import FeatureEnhancer
from plumekit.evalmetrics import (
    Confusion,
    LossConfig,
    confusion,
    dice_f1,
    difference_map,
    focal_loss,
    iou,
)
from plumekit.labeling import connected_components, extract_contours
from plumekit.raster import Field, Mask, Scene, read_brf, write_brf
from plumekit.synth import (
    BandTexture,
    NoiseSpec,
    PlumeSpec,
    SceneConfig,
    generate_scene,
)

from test_dataset import _random_pair, _sample  # noqa: E402
from test_labeling import random_holefree_mask  # noqa: E402


@contextmanager
def criterion(name: str, budget_s: float):
    start = time.monotonic()
    try:
        yield
    except Exception:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    elapsed = time.monotonic() - start
    if elapsed > budget_s:
        print(f"ACCEPTANCE {name}: FAIL (runtime {elapsed:.1f}s > {budget_s}s)")
        pytest.fail(f"{name} exceeded runtime budget: {elapsed:.1f}s > {budget_s}s")
    print(f"ACCEPTANCE {name}: PASS ({elapsed:.1f}s)")


def _scan_sse(cs: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """Evaluate sum((c*x - y)^2) at every grid point, chunked; return argmin.

    Brute force per pixel, never the closed-form solution.
    """
    best_c, best_sse = None, np.inf
    for start in range(0, cs.size, 256):
        chunk = cs[start : start + 256]
        sse = np.square(chunk[:, None] * x[None, :] - y[None, :]).sum(axis=1)
        i = int(np.argmin(sse))
        if sse[i] < best_sse:
            best_sse, best_c = float(sse[i]), float(chunk[i])
    return best_c


def refined_grid_scan_c(x: np.ndarray, y: np.ndarray) -> float:
    """Grid minimizer of sum((c*x - y)^2) over [0, 4], refined to 1e-7 steps.

    Coarse-to-fine levels are valid because the SSE is a convex parabola;
    the final quantization (5e-8) sits far below the 1e-6 check tolerance.
    """
    c = _scan_sse(np.arange(0.0, 4.0 + 1e-3, 1e-3), x, y)
    c = _scan_sse(np.arange(c - 2e-3, c + 2e-3, 1e-5), x, y)
    return _scan_sse(np.arange(c - 2e-5, c + 2e-5, 1e-7), x, y)


def test_least_squares_oracles():
    with criterion("least-squares oracles", budget_s=10.0):
        rng = np.random.default_rng(101)
        # scale factor vs a pure grid scan, 100 random 32x32 scenes
        for _ in range(100):
            r11 = rng.uniform(1, 100, (32, 32)).astype(np.float32)
            r12 = rng.uniform(1, 100, (32, 32)).astype(np.float32)
            sf = enhance.fit_scale_c(Field(r12), Field(r11))
            x = r12.reshape(-1).astype(np.float64)
            y = r11.reshape(-1).astype(np.float64)
            c_scan = refined_grid_scan_c(x, y)
            assert abs(sf.c - c_scan) / abs(c_scan) < 1e-6

        # background regression vs independent normal equations
        for _ in range(25):
            bands = {n: rng.uniform(1, 80, (32, 32)) for n in ("B02", "B08", "B11")}
            bands["B12"] = rng.uniform(1, 80, (32, 32))
            scene = Scene(bands)
            model = enhance.fit_background_regression(scene, None, ("B02", "B08", "B11"))
            X = np.column_stack(
                [scene.band(n).values.reshape(-1).astype(np.float64)
                 for n in ("B02", "B08", "B11")]
                + [np.ones(32 * 32)]
            )
            yv = scene.band("B12").values.reshape(-1).astype(np.float64)
            beta = np.linalg.solve(X.T @ X, X.T @ yv)
            for got, want in zip(model.coefficients, beta[:-1]):
                assert abs(got - want) / max(abs(want), 1e-12) < 1e-6
            assert abs(model.intercept - beta[-1]) / max(abs(beta[-1]), 1e-12) < 1e-6


def test_exactness_oracles():
    with criterion("exactness oracles", budget_s=10.0):
        rng = np.random.default_rng(202)
        for i in range(50):
            # exactly linear background scene: S identically 0 within 1e-5
            cfg = SceneConfig(
                width=32,
                height=32,
                textures={"B11": BandTexture(
                    base_level=float(rng.uniform(60, 160)),
                    amplitude=float(rng.uniform(1, 10)),
                    correlation_px=float(rng.uniform(0, 5)),
                )},
                b12_coefficients={"B11": float(rng.uniform(0.2, 1.8))},
                b12_intercept=float(rng.uniform(0, 20)),
                seed=500 + i,
            )
            scene, _ = generate_scene(cfg)
            model = enhance.fit_background_regression(scene, None, ("B11",))
            s, _ = enhance.sanchez_ratio(
                scene.band("B12"), enhance.predict_r12(model, scene)
            )
            assert np.abs(s.values).max() < 1e-5

            # noiseless proportional pair: V identically 0 within 1e-6
            r11 = scene.band("B11").values
            k = float(rng.uniform(0.2, 3.0))
            r12 = Field((k * r11.astype(np.float64)))
            sf = enhance.fit_scale_c(r12, scene.band("B11"))
            v, _ = enhance.varon_ratio(r12, scene.band("B11"), sf)
            assert np.abs(v.values).max() < 1e-6


def test_metric_identities():
    with criterion("metric identities", budget_s=5.0):
        rng = np.random.default_rng(303)
        # micro identity iou = dice/(2-dice), exact in rational arithmetic,
        # and within 2 ulps in floats, over 1e4 random confusions
        for _ in range(10_000):
            tp, fp, fn = (int(v) for v in rng.integers(0, 10**6, 3))
            if tp + fp + fn == 0:
                continue
            c = Confusion(tp=tp, fp=fp, fn=fn)
            d_exact = Fraction(2 * tp, 2 * tp + fp + fn)
            assert Fraction(tp, tp + fp + fn) == d_exact / (2 - d_exact)
            d = dice_f1(c)
            assert iou(c) == pytest.approx(d / (2 - d), rel=1e-14)

        # difference-map histogram equals the confusion exactly
        for _ in range(50):
            pred = Mask(rng.integers(0, 2, (16, 16), dtype=np.uint8))
            gt = Mask(rng.integers(0, 2, (16, 16), dtype=np.uint8))
            codes = difference_map(pred, gt)
            conf = confusion(pred, gt)
            hist = np.bincount(codes.labels.reshape(-1), minlength=4)
            assert (hist[0], hist[1], hist[2], hist[3]) == (
                conf.tn, conf.tp, conf.fp, conf.fn,
            )

        # focal with gamma=0, alpha=1 is mean BCE within 1e-9
        for _ in range(20):
            probs = Field(rng.uniform(0.001, 0.999, (12, 12)))
            gt = Mask(rng.integers(0, 2, (12, 12), dtype=np.uint8))
            got = focal_loss(probs, gt, LossConfig(alpha=1.0, gamma=0.0))
            p = np.clip(probs.values.astype(np.float64), 1e-7, 1 - 1e-7)
            g = gt.labels.astype(np.float64)
            bce = float(np.mean(-(g * np.log(p) + (1 - g) * np.log(1 - p))))
            assert abs(got - bce) < 1e-9

        # hand-computed cases within 1e-8
        tie = Confusion(tp=1, fp=1, fn=1)
        assert abs(dice_f1(tie) - 0.5) < 1e-8
        assert abs(iou(tie) - 1 / 3) < 1e-8
        focal = focal_loss(Field([[0.9]]), Mask(np.array([[1]], dtype=np.uint8)),
                           LossConfig(alpha=0.25, gamma=2.0))
        assert abs(focal - 2.6341e-4) < 1e-8


def test_single_pixel_sensitivity():
    with criterion("single-pixel sensitivity", budget_s=60.0):
        detected = 0
        false_pixels = 0
        total_pixels = 0
        cfg_detect = DetectorConfig(k_sigma=4.0, channel="S", min_area_px=1)
        for seed in range(50):
            cfg = SceneConfig(
                width=64,
                height=64,
                textures={"B11": BandTexture(base_level=100.0, amplitude=5.0,
                                             correlation_px=3.0)},
                b12_coefficients={"B11": 0.5},
                noise=NoiseSpec(gaussian_sigma=0.5),
                plumes=(
                    PlumeSpec(center_xy=(32, 32), sigma_px=0.5,
                              peak_enhancement=1.0, absorption_kappa=0.1,
                              label_threshold=0.5, source_id=1),
                ),
                seed=9000 + seed,
            )
            scene, truth = generate_scene(cfg)
            assert truth.labels.sum() == 1  # a single 400 m^2 pixel at 20 m
            stack = FeatureEnhancer().fit(scene).transform(scene)

            # construction check: the anomaly is at least 6 robust stds deep
            s = stack.channels[1].values.astype(np.float64)
            med = np.median(s)
            rstd = 1.4826 * np.median(np.abs(s - med))
            depth = (med - s[32, 32]) / rstd
            assert depth >= 6.0

            pred = detect_plumes(stack, cfg_detect)
            if pred.labels[32, 32]:
                detected += 1
            false_pixels += int(np.count_nonzero(pred.labels & (truth.labels == 0)))
            total_pixels += pred.labels.size

        assert detected / 50 >= 0.95
        assert false_pixels / total_pixels < 1e-3


# High-contrast benchmark: deep plumes (center transmittance e^-2) whose
# labeled footprint ends where the B12 deficit is ~15% of background, a
# boundary an 8-robust-std cut on the S channel reproduces almost exactly.
E2E_SCENE = {
    "width": 64,
    "height": 64,
    "bands": {"B11": {"base_level": 100.0, "amplitude": 8.0, "correlation_px": 4.0}},
    "b12": {"coefficients": {"B11": 0.5}, "intercept": 0.0},
    "noise": {"gaussian_sigma": 1.0},
    "plumes": [
        {
            "center_xy": [32, 32],
            "sigma_px": 2.5,
            "peak_enhancement": 1.0,
            "absorption_kappa": 2.0,
            "label_threshold": 0.08,
            "source_id": 1,
        }
    ],
    "seed": 0,
}
E2E_K_SIGMA = "8"


def test_end_to_end_pipeline(tmp_path):
    with criterion("end-to-end pipeline", budget_s=120.0):
        cfg_path = tmp_path / "scene.json"
        cfg_path.write_text(json.dumps(E2E_SCENE))
        inputs = []
        for i in range(20):
            out = tmp_path / f"scene{i:02d}"
            assert run(["synth", "--config", str(cfg_path), "--out", str(out),
                        "--seed", str(4000 + i)]) == 0
            assert run(["enhance", "--scene", str(out / "scene.brf"),
                        "--out", str(out / "stack.brf")]) == 0
            inputs.append({"scene_id": f"scene{i:02d}",
                           "stack": f"scene{i:02d}/stack.brf",
                           "mask": f"scene{i:02d}/mask.brf"})

        build = {
            "dataset_id": "e2e",
            "inputs": inputs,
            "tile_px": 64,
            "stride_px": 64,
            "val_fraction": 0.5,
            "seed": 11,
        }
        (tmp_path / "build.json").write_text(json.dumps(build))
        ds = tmp_path / "ds"
        assert run(["dataset", "build", "--config", str(tmp_path / "build.json"),
                    "--out", str(ds)]) == 0

        manifest = json.loads((ds / "manifest.json").read_text())
        preds = tmp_path / "preds"
        preds.mkdir()
        for rec in manifest["samples"]:
            assert run(["detect", "--in", str(ds / rec["stack"]),
                        "--k", E2E_K_SIGMA, "--channel", "S", "--min-area", "1",
                        "--out", str(preds / f"{rec['id']}.brf")]) == 0

        assert run(["eval", "--manifest", str(ds / "manifest.json"),
                    "--pred", str(preds), "--split", "all",
                    "--out", str(tmp_path / "report.json")]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["micro"]["dice"] >= 0.9


def test_determinism_and_io(tmp_path):
    with criterion("determinism & I/O", budget_s=30.0):
        # BRF round trip, 1000 random objects
        rng = np.random.default_rng(404)
        path = tmp_path / "roundtrip.brf"
        for i in range(1000):
            h, w = (int(v) for v in rng.integers(1, 9, 2))
            kind = i % 3
            if kind == 0:
                obj = Field(rng.uniform(-1e5, 1e5, (h, w)))
            elif kind == 1:
                obj = Mask(rng.integers(0, 256, (h, w), dtype=np.uint8))
            else:
                obj = Scene(
                    {f"B{j:02d}": rng.uniform(0, 1e4, (h, w)) for j in range(1, 3)},
                    pixel_size_m=20.0,
                )
            write_brf(obj, path)
            assert read_brf(path) == obj

        # every subcommand reruns byte-identically (data outputs only;
        # run records carry wall-clock durations by design)
        cfg_path = tmp_path / "scene.json"
        cfg_path.write_text(json.dumps(E2E_SCENE))
        vents = tmp_path / "vents.json"
        vents.write_text(json.dumps([{"name": "A", "xy": [32, 32]}]))

        def chain(root):
            root.mkdir()
            sc = root / "sc"
            assert run(["synth", "--config", str(cfg_path), "--out", str(sc)]) == 0
            assert run(["enhance", "--scene", str(sc / "scene.brf"),
                        "--out", str(root / "stack.brf")]) == 0
            stack = read_brf(root / "stack.brf")
            write_brf(stack.channels[1], root / "s.brf")
            assert run(["label", "--in", str(root / "s.brf"), "--threshold", "-5",
                        "--direction", "below", "--out-mask", str(root / "labeled.brf"),
                        "--out-contours", str(root / "contours.json"),
                        "--vents", str(vents)]) == 0
            assert run(["detect", "--in", str(root / "stack.brf"), "--k", E2E_K_SIGMA,
                        "--out", str(root / "pred.brf")]) == 0
            build = {
                "dataset_id": "d",
                "inputs": [{"scene_id": "sc", "stack": "stack.brf", "mask": "sc/mask.brf"}],
                "tile_px": 32, "stride_px": 32, "val_fraction": 0.5, "seed": 1,
            }
            (root / "build.json").write_text(json.dumps(build))
            assert run(["dataset", "build", "--config", str(root / "build.json"),
                        "--out", str(root / "ds")]) == 0
            manifest = json.loads((root / "ds" / "manifest.json").read_text())
            preds = root / "preds"
            preds.mkdir()
            for rec in manifest["samples"]:
                assert run(["detect", "--in", str(root / "ds" / rec["stack"]), "--k", E2E_K_SIGMA,
                            "--out", str(preds / f"{rec['id']}.brf")]) == 0
            assert run(["eval", "--manifest", str(root / "ds" / "manifest.json"),
                        "--pred", str(preds), "--split", "all",
                        "--out", str(root / "report.json")]) == 0
            assert run(["diffmap", "--pred", str(root / "pred.brf"),
                        "--gt", str(sc / "mask.brf"), "--out", str(root / "diff.ppm"),
                        "--out-codes", str(root / "codes.brf")]) == 0

        chain(tmp_path / "r1")
        chain(tmp_path / "r2")
        files1 = sorted(
            p.relative_to(tmp_path / "r1")
            for p in (tmp_path / "r1").rglob("*")
            if p.is_file() and not p.name.endswith("run.json") and p.name != "run_record.json"
        )
        assert files1
        for rel in files1:
            a = (tmp_path / "r1" / rel).read_bytes()
            b = (tmp_path / "r2" / rel).read_bytes()
            assert a == b, f"rerun differs: {rel}"


def test_augmentation_labeling_properties():
    with criterion("augmentation & labeling properties", budget_s=30.0):
        rng = np.random.default_rng(505)
        # involution / cycle identities
        for _ in range(10):
            s = _sample(rng)
            h2 = augment(augment(s, "hflip"), "hflip")
            v2 = augment(augment(s, "vflip"), "vflip")
            assert h2.stack == s.stack and h2.mask == s.mask
            assert v2.stack == s.stack and v2.mask == s.mask
            r = s
            for _ in range(4):
                r = augment(r, "rot90")
            assert r.stack == s.stack and r.mask == s.mask

        # contour shoelace area equals component area on 200 random blobs
        for _ in range(200):
            mask = random_holefree_mask(rng)
            comps = {c.id: c for c in connected_components(mask, 8)}
            for contour in extract_contours(mask):
                assert contour.shoelace_area() == comps[contour.component_id].area_px

        # connectivity monotonicity
        for _ in range(50):
            mask = Mask((rng.random((16, 16)) < 0.4).astype(np.uint8))
            assert len(connected_components(mask, 8)) <= len(connected_components(mask, 4))
