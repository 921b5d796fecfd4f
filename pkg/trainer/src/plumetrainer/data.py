"""Manifest-driven dataset: loads tiles into memory for toy-scale training."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import Dataset

from .brf import read_mask, read_stack


class ManifestDataset(Dataset):
    """Tiles of one split of a dataset manifest.

    Returns (stack, mask, sample_id): stack is a (3, H, W) float32 tensor,
    mask a (H, W) float32 tensor of {0, 1}. All tiles are loaded eagerly;
    datasets here are hundreds of small tiles, not millions.
    """

    def __init__(self, manifest_path, split: str):
        manifest_path = Path(manifest_path)
        manifest = json.loads(manifest_path.read_text())
        base = manifest_path.parent
        self.ids: list[str] = []
        self.stacks: list[np.ndarray] = []
        self.masks: list[np.ndarray] = []
        for record in manifest["samples"]:
            if split != "all" and record["split"] != split:
                continue
            self.ids.append(record["id"])
            self.stacks.append(read_stack(base / record["stack"]))
            self.masks.append((read_mask(base / record["mask"]) != 0).astype(np.float32))
        if not self.ids:
            raise ValueError(f"manifest has no samples in split {split!r}")

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, i: int):
        return (
            torch.from_numpy(self.stacks[i].copy()),
            torch.from_numpy(self.masks[i].copy()),
            self.ids[i],
        )
