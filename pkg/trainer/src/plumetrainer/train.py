"""Training, prediction and loss-weight grid search over manifest datasets.

Runs are seeded (torch + data order) and single-process, so repeated runs
agree up to framework nondeterminism (CPU conv kernels are deterministic
in practice; exact bitwise equality of weights is not promised, metric
trajectories are).
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader

from .brf import write_field, write_mask
from .data import ManifestDataset
from .losses import LossConfig, combined_loss
from .metrics import MetricAccumulator
from .models import ARCHITECTURES, build_model

PREDICTION_THRESHOLD = 0.5


@dataclass(frozen=True)
class TrainConfig:
    architecture: str
    manifest: str
    out_dir: str = "runs/default"
    loss: LossConfig = field(default_factory=LossConfig)
    learning_rate: float = 1e-3
    lr_decay: float = 0.95  # per-epoch exponential factor
    epochs: int = 15
    batch_size: int = 8
    pretrained: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        return cls(
            architecture=obj["architecture"],
            manifest=obj["manifest"],
            out_dir=obj.get("out_dir", "runs/default"),
            loss=LossConfig.from_json(obj.get("loss", {})),
            learning_rate=float(obj.get("learning_rate", 1e-3)),
            lr_decay=float(obj.get("lr_decay", 0.95)),
            epochs=int(obj.get("epochs", 15)),
            batch_size=int(obj.get("batch_size", 8)),
            pretrained=bool(obj.get("pretrained", False)),
            seed=int(obj.get("seed", 0)),
        )

    def to_json(self) -> dict:
        return {
            "architecture": self.architecture,
            "manifest": self.manifest,
            "out_dir": self.out_dir,
            "loss": self.loss.to_json(),
            "learning_rate": self.learning_rate,
            "lr_decay": self.lr_decay,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "pretrained": self.pretrained,
            "seed": self.seed,
        }


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_dice: float
    train_iou: float
    val_loss: float
    val_dice: float  # micro
    val_iou: float  # micro
    val_dice_macro: float
    val_iou_macro: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats]
    best_epoch: int  # index into epochs, by micro val dice
    checkpoint: str

    def to_json(self) -> dict:
        return {
            "epochs": [vars(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "checkpoint": self.checkpoint,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))


def _evaluate(model, loader, loss_cfg) -> tuple[float, MetricAccumulator]:
    model.eval()
    acc = MetricAccumulator()
    total_loss, n_batches = 0.0, 0
    with torch.no_grad():
        for stacks, masks, _ in loader:
            probs = torch.sigmoid(model(stacks)).squeeze(1)
            total_loss += float(combined_loss(probs, masks, loss_cfg))
            n_batches += 1
            binary = (probs >= PREDICTION_THRESHOLD).numpy()
            target = masks.numpy()
            for i in range(binary.shape[0]):
                acc.add(binary[i], target[i])
    return total_loss / max(n_batches, 1), acc


def train(cfg: TrainConfig) -> TrainHistory:
    """Train one model; writes history.json and checkpoint.pt under out_dir."""
    torch.manual_seed(cfg.seed)
    np.random.seed(cfg.seed)

    train_set = ManifestDataset(cfg.manifest, "train")
    val_set = ManifestDataset(cfg.manifest, "val")
    generator = torch.Generator().manual_seed(cfg.seed)
    train_loader = DataLoader(
        train_set, batch_size=cfg.batch_size, shuffle=True,
        generator=generator, num_workers=0, drop_last=len(train_set) > cfg.batch_size,
    )
    val_loader = DataLoader(val_set, batch_size=cfg.batch_size, num_workers=0)

    model = build_model(cfg.architecture, cfg.pretrained)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    scheduler = torch.optim.lr_scheduler.ExponentialLR(optimizer, gamma=cfg.lr_decay)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / "checkpoint.pt"

    history: list[EpochStats] = []
    best_epoch, best_dice = 0, -1.0
    for epoch in range(cfg.epochs):
        model.train()
        running_loss, n_batches = 0.0, 0
        train_acc = MetricAccumulator()
        for stacks, masks, _ in train_loader:
            optimizer.zero_grad()
            probs = torch.sigmoid(model(stacks)).squeeze(1)
            loss = combined_loss(probs, masks, cfg.loss)
            loss.backward()
            optimizer.step()
            running_loss += float(loss.detach())
            n_batches += 1
            binary = (probs.detach() >= PREDICTION_THRESHOLD).numpy()
            target = masks.numpy()
            for i in range(binary.shape[0]):
                train_acc.add(binary[i], target[i])
        scheduler.step()

        val_loss, val_acc = _evaluate(model, val_loader, cfg.loss)
        stats = EpochStats(
            epoch=epoch,
            train_loss=running_loss / max(n_batches, 1),
            train_dice=train_acc.micro_dice(),
            train_iou=train_acc.micro_iou(),
            val_loss=val_loss,
            val_dice=val_acc.micro_dice(),
            val_iou=val_acc.micro_iou(),
            val_dice_macro=val_acc.macro_dice(),
            val_iou_macro=val_acc.macro_iou(),
        )
        history.append(stats)
        if stats.val_dice > best_dice:
            best_dice, best_epoch = stats.val_dice, epoch
            torch.save(
                {"architecture": cfg.architecture, "state_dict": model.state_dict()},
                checkpoint_path,
            )

    result = TrainHistory(epochs=history, best_epoch=best_epoch,
                          checkpoint=str(checkpoint_path))
    result.save(out_dir / "history.json")
    (out_dir / "config.json").write_text(json.dumps(cfg.to_json(), indent=2, sort_keys=True))
    return result


def predict(checkpoint_path, manifest_path, out_dir, split: str = "val") -> list[str]:
    """Write per-sample probability fields and binarized masks.

    For each sample id the probability field goes to ``<id>_prob.brf`` (f32)
    and the thresholded mask to ``<id>.brf`` (u8), the name the evaluation
    pipeline expects.
    """
    payload = torch.load(checkpoint_path, map_location="cpu", weights_only=True)
    model = build_model(payload["architecture"], pretrained=False)
    model.load_state_dict(payload["state_dict"])
    model.eval()

    dataset = ManifestDataset(manifest_path, split)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    seen: set[str] = set()
    with torch.no_grad():
        for stacks, _, sample_id in DataLoader(dataset, batch_size=8, num_workers=0):
            probs = torch.sigmoid(model(stacks)).squeeze(1).numpy()
            for i, sid in enumerate(sample_id):
                if sid in seen:
                    raise ValueError(f"duplicate sample id {sid!r} in manifest")
                seen.add(sid)
                write_field(probs[i], out / f"{sid}_prob.brf")
                write_mask((probs[i] >= PREDICTION_THRESHOLD).astype(np.uint8),
                           out / f"{sid}.brf")
                written.append(sid)
    return written


def grid_search(base_cfg: TrainConfig, grid: dict, out_csv=None):
    """Train every loss-weight combination and rank by best micro val dice.

    ``grid`` maps any of alpha/gamma/lambda_focal/lambda_dice to value
    lists; omitted axes stay at the base config value. Returns
    (best TrainConfig, result rows).
    """
    axes = {}
    for key in ("alpha", "gamma", "lambda_focal", "lambda_dice"):
        values = grid.get(key, [getattr(base_cfg.loss, key)])
        if not values:
            raise ValueError(f"empty grid axis {key!r}")
        axes[key] = list(values)

    rows = []
    best_cfg, best_dice = None, -1.0
    for combo in itertools.product(*axes.values()):
        params = dict(zip(axes.keys(), combo))
        loss_cfg = LossConfig(dice_eps=base_cfg.loss.dice_eps, **params)
        run_dir = Path(base_cfg.out_dir) / (
            "grid_a{alpha}_g{gamma}_f{lambda_focal}_d{lambda_dice}".format(**params)
        )
        cfg = replace(base_cfg, loss=loss_cfg, out_dir=str(run_dir))
        history = train(cfg)
        dice = history.epochs[history.best_epoch].val_dice
        rows.append({**params, "val_dice": dice, "best_epoch": history.best_epoch,
                     "out_dir": str(run_dir)})
        if dice > best_dice:
            best_dice, best_cfg = dice, cfg

    rows.sort(key=lambda r: -r["val_dice"])
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    return best_cfg, rows
