"""Shared fixture: a 200-tile dataset built entirely by the plumekit CLI.

The builder script runs in a child interpreter and talks only to the
plumekit command-line surface, mirroring how the trainer is used in
practice: the manifest JSON and BRF tiles on disk are the interface.
"""

import json
import subprocess
import sys
import textwrap
from pathlib import Path

import pytest

BUILDER = textwrap.dedent(
    """
    import json, sys
    from pathlib import Path
    from plumekit.cli import run

    root = Path(sys.argv[1])
    n_scenes = int(sys.argv[2])
    scene = {
        "width": 64, "height": 64,
        "bands": {"B11": {"base_level": 100.0, "amplitude": 8.0, "correlation_px": 4.0}},
        "b12": {"coefficients": {"B11": 0.5}, "intercept": 0.0},
        "noise": {"gaussian_sigma": 1.0},
        "plumes": [{"center_xy": [32, 32], "sigma_px": 2.5, "peak_enhancement": 1.0,
                    "absorption_kappa": 2.0, "label_threshold": 0.08, "source_id": 1}],
        "seed": 0,
    }
    inputs = []
    for i in range(n_scenes):
        cfg = dict(scene)
        cfg["plumes"] = [dict(scene["plumes"][0],
                              center_xy=[16 + (i * 7) % 32, 16 + (i * 11) % 32])]
        cfg_path = root / f"cfg{i:02d}.json"
        cfg_path.write_text(json.dumps(cfg))
        out = root / f"s{i:02d}"
        assert run(["synth", "--config", str(cfg_path), "--out", str(out),
                    "--seed", str(7000 + i)]) == 0
        assert run(["enhance", "--scene", str(out / "scene.brf"),
                    "--out", str(out / "stack.brf")]) == 0
        inputs.append({"scene_id": f"s{i:02d}", "stack": f"s{i:02d}/stack.brf",
                       "mask": f"s{i:02d}/mask.brf"})
    build = {"dataset_id": "toy", "inputs": inputs, "tile_px": 32, "stride_px": 32,
             "val_fraction": 0.2, "stratify": True, "seed": 5}
    (root / "build.json").write_text(json.dumps(build))
    assert run(["dataset", "build", "--config", str(root / "build.json"),
                "--out", str(root / "ds")]) == 0
    """
)


def build_dataset(root: Path, n_scenes: int) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    script = root / "builder.py"
    script.write_text(BUILDER)
    subprocess.run(
        [sys.executable, str(script), str(root), str(n_scenes)],
        check=True, capture_output=True, text=True,
    )
    return root / "ds" / "manifest.json"


@pytest.fixture(scope="session")
def toy_manifest(tmp_path_factory) -> Path:
    """50 scenes x 4 non-overlapping tiles = 200 tiles, 40 of them val."""
    manifest = build_dataset(tmp_path_factory.mktemp("toy200"), 50)
    records = json.loads(manifest.read_text())["samples"]
    assert len(records) == 200
    return manifest


@pytest.fixture(scope="session")
def small_manifest(tmp_path_factory) -> Path:
    """3 scenes x 4 tiles = 12 tiles, for fast determinism/grid tests."""
    return build_dataset(tmp_path_factory.mktemp("toy12"), 3)
