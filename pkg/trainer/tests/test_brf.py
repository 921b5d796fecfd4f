"""Trainer-side BRF I/O against files from the producing pipeline."""

import numpy as np
import pytest

from plumetrainer.brf import BrfError, read_mask, read_stack, write_field, write_mask


def test_mask_write_read_round_trip(tmp_path):
    labels = np.random.default_rng(0).integers(0, 2, (16, 16)).astype(np.uint8)
    write_mask(labels, tmp_path / "m.brf")
    assert np.array_equal(read_mask(tmp_path / "m.brf"), labels)


def test_field_refuses_nan(tmp_path):
    with pytest.raises(BrfError):
        write_field(np.array([[np.nan]]), tmp_path / "f.brf")


def test_reads_pipeline_artifacts(small_manifest):
    import json

    base = small_manifest.parent
    records = json.loads(small_manifest.read_text())["samples"]
    stack = read_stack(base / records[0]["stack"])
    mask = read_mask(base / records[0]["mask"])
    assert stack.shape == (3, 32, 32)
    assert stack.dtype == np.float32
    assert np.array_equal(stack[0], stack[2])  # duplicated V channel
    assert mask.shape == (32, 32)


def test_rejects_wrong_kind(small_manifest):
    import json

    base = small_manifest.parent
    records = json.loads(small_manifest.read_text())["samples"]
    with pytest.raises(BrfError, match="not a mask"):
        read_mask(base / records[0]["stack"])
    with pytest.raises(BrfError, match="stack"):
        read_stack(base / records[0]["mask"])


def test_truncated_payload(tmp_path):
    write_mask(np.zeros((4, 4), dtype=np.uint8), tmp_path / "m.brf")
    data = (tmp_path / "m.brf").read_bytes()
    (tmp_path / "short.brf").write_bytes(data[:-3])
    with pytest.raises(BrfError, match="size mismatch"):
        read_mask(tmp_path / "short.brf")
