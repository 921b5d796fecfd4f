"""Dataset assembly: augmentation, tiling, splits, and the manifest.

A dataset is a directory of BRF pairs (stack tile + mask tile) plus a JSON
manifest recording, for every sample, its split and enough provenance
(source scene id, tile origin, augmentation chain, seed) to regenerate it
bit-exactly from the source rasters. Augmentation happens here, at build
time, and is recorded rather than applied on the fly, so a dataset is a
pure function of its config.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .enhance import FeatureStack
from .raster import Field, Mask, read_brf, write_brf
from .validation import InvariantError, PlumekitError

GEOMETRIC_OPS = ("hflip", "vflip", "rot90", "rot180", "rot270")


@dataclass(frozen=True)
class Sample:
    """One training sample: a stack tile, its mask tile, and provenance."""

    stack: FeatureStack
    mask: Mask
    provenance: dict

    @property
    def id(self) -> str:
        ox, oy = self.provenance["origin"]
        parts = [f"{self.provenance['scene_id']}-x{ox:04d}-y{oy:04d}"]
        parts += [op.replace(":", "") for op in self.provenance["ops"]]
        return "-".join(parts)

    @property
    def has_plume(self) -> bool:
        return bool(np.any(self.mask.labels))


@dataclass(frozen=True)
class SampleRecord:
    id: str
    split: str
    stack_path: str
    mask_path: str
    provenance: dict
    has_plume: bool


@dataclass
class Manifest:
    """Index of a built dataset; serialized as manifest.json."""

    dataset_id: str
    seed: int
    config_hash: str
    records: list[SampleRecord] = field(default_factory=list)

    def split_records(self, split: str) -> list[SampleRecord]:
        if split == "all":
            return list(self.records)
        return [r for r in self.records if r.split == split]

    def validate_files(self, base_dir) -> None:
        base = Path(base_dir)
        missing = [
            p
            for r in self.records
            for p in (r.stack_path, r.mask_path)
            if not (base / p).exists()
        ]
        if missing:
            raise InvariantError(f"manifest references missing files: {missing[:5]}")

    def to_json(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "samples": [
                {
                    "id": r.id,
                    "split": r.split,
                    "stack": r.stack_path,
                    "mask": r.mask_path,
                    "provenance": r.provenance,
                    "has_plume": r.has_plume,
                }
                for r in self.records
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Manifest":
        return cls(
            dataset_id=obj["dataset_id"],
            seed=int(obj["seed"]),
            config_hash=obj["config_hash"],
            records=[
                SampleRecord(
                    id=s["id"],
                    split=s["split"],
                    stack_path=s["stack"],
                    mask_path=s["mask"],
                    provenance=s["provenance"],
                    has_plume=bool(s["has_plume"]),
                )
                for s in obj["samples"]
            ],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "Manifest":
        return cls.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------


def _parse_op(op: str) -> tuple[str, float | None]:
    if ":" in op:
        name, _, arg = op.partition(":")
        try:
            factor = float(arg)
        except ValueError:
            raise InvariantError(f"bad augmentation factor in {op!r}") from None
        return name, factor
    return op, None


def _geometric(values: np.ndarray, name: str) -> np.ndarray:
    if name == "hflip":
        return values[:, ::-1]
    if name == "vflip":
        return values[::-1, :]
    if name == "rot90":
        return np.rot90(values, 1)
    if name == "rot180":
        return np.rot90(values, 2)
    if name == "rot270":
        return np.rot90(values, 3)
    raise InvariantError(f"unknown augmentation op {name!r}")


def apply_ops(stack: FeatureStack, mask: Mask, ops: list[str]) -> tuple[FeatureStack, Mask]:
    """Apply an augmentation chain to a (stack, mask) pair.

    Geometric ops permute both rasters; photometric ops (brightness,
    contrast) touch the stack channels only and never the mask.
    """
    v = stack.channels[0].values
    s = stack.channels[1].values
    labels = mask.labels
    for op in ops:
        name, factor = _parse_op(op)
        if name in GEOMETRIC_OPS:
            v = _geometric(v, name)
            s = _geometric(s, name)
            labels = _geometric(labels, name)
        elif name == "brightness":
            if factor is None or factor <= 0:
                raise InvariantError("brightness needs a factor > 0")
            v = (v.astype(np.float64) * factor).astype(np.float32)
            s = (s.astype(np.float64) * factor).astype(np.float32)
        elif name == "contrast":
            if factor is None or factor <= 0:
                raise InvariantError("contrast needs a factor > 0")

            def stretch(ch: np.ndarray) -> np.ndarray:
                vals = ch.astype(np.float64)
                mu = vals.mean()
                return (mu + (vals - mu) * factor).astype(np.float32)

            v = stretch(v)
            s = stretch(s)
        else:
            raise InvariantError(f"unknown augmentation op {name!r}")
    v_field = Field(v)
    out_stack = FeatureStack(
        v=v_field, s=Field(s), v_dup=v_field, normalization=stack.normalization
    )
    return out_stack, Mask(labels)


def augment(sample: Sample, op: str, seed: int | None = None) -> Sample:
    """One augmented copy of a sample, with the op recorded in provenance."""
    stack, mask = apply_ops(sample.stack, sample.mask, [op])
    provenance = dict(sample.provenance)
    provenance["ops"] = list(provenance["ops"]) + [op]
    if seed is not None:
        provenance["aug_seed"] = seed
    return Sample(stack=stack, mask=mask, provenance=provenance)


# ---------------------------------------------------------------------------
# Tiling and splits
# ---------------------------------------------------------------------------


def _origins(extent: int, tile_px: int, stride_px: int) -> list[int]:
    xs = list(range(0, extent - tile_px + 1, stride_px))
    if xs[-1] != extent - tile_px:
        xs.append(extent - tile_px)  # edge-aligned final tile, no padding
    return xs


def tile(
    scene_stack: FeatureStack,
    mask: Mask,
    tile_px: int,
    stride_px: int,
    scene_id: str = "scene",
    seed: int = 0,
) -> list[Sample]:
    """Cut a stack/mask pair into tiles in raster order.

    Origins step by ``stride_px`` with a final edge-aligned tile whenever
    the extent is not an exact multiple, so every pixel is covered without
    inventing padding values.
    """
    h, w = scene_stack.shape
    if mask.shape != (h, w):
        raise InvariantError("stack and mask shapes differ")
    if tile_px > min(w, h):
        raise InvariantError(f"tile_px {tile_px} exceeds scene extent {min(w, h)}")
    if stride_px < 1:
        raise InvariantError("stride_px must be >= 1")

    samples = []
    v = scene_stack.channels[0].values
    s = scene_stack.channels[1].values
    for oy in _origins(h, tile_px, stride_px):
        for ox in _origins(w, tile_px, stride_px):
            v_t = Field(v[oy : oy + tile_px, ox : ox + tile_px])
            s_t = Field(s[oy : oy + tile_px, ox : ox + tile_px])
            m_t = Mask(mask.labels[oy : oy + tile_px, ox : ox + tile_px])
            samples.append(
                Sample(
                    stack=FeatureStack(
                        v=v_t, s=s_t, v_dup=v_t, normalization=scene_stack.normalization
                    ),
                    mask=m_t,
                    provenance={
                        "scene_id": scene_id,
                        "origin": [ox, oy],
                        "tile_px": tile_px,
                        "ops": [],
                        "seed": seed,
                    },
                )
            )
    return samples


def regenerate_sample(
    scene_stack: FeatureStack, scene_mask: Mask, provenance: dict
) -> Sample:
    """Rebuild a sample from its provenance record (bit-exact)."""
    ox, oy = provenance["origin"]
    t = provenance["tile_px"]
    v = Field(scene_stack.channels[0].values[oy : oy + t, ox : ox + t])
    s = Field(scene_stack.channels[1].values[oy : oy + t, ox : ox + t])
    m = Mask(scene_mask.labels[oy : oy + t, ox : ox + t])
    stack = FeatureStack(v=v, s=s, v_dup=v, normalization=scene_stack.normalization)
    stack, m = apply_ops(stack, m, list(provenance["ops"]))
    return Sample(stack=stack, mask=m, provenance=provenance)


def split_manifest(
    samples: list[Sample],
    val_fraction: float,
    seed: int,
    stratify: bool = False,
    dataset_id: str = "dataset",
    config_hash: str = "",
) -> Manifest:
    """Assign train/val splits with a seeded shuffle and build the manifest.

    With ``stratify``, plume-containing and plume-free samples are split
    independently so each split's plume fraction matches the global one to
    within a single sample.
    """
    n = len(samples)
    if n < 2:
        raise InvariantError("need >= 2 samples to split")
    if not 0.0 < val_fraction < 1.0:
        raise InvariantError("val_fraction must be in (0, 1)")

    rng = np.random.default_rng(seed)
    val_ids: set[int] = set()
    if stratify:
        strata = (
            [i for i, s in enumerate(samples) if s.has_plume],
            [i for i, s in enumerate(samples) if not s.has_plume],
        )
        for idx in strata:
            if not idx:
                continue
            perm = rng.permutation(len(idx))
            n_val = int(round(len(idx) * val_fraction))
            val_ids.update(idx[perm[j]] for j in range(n_val))
    else:
        perm = rng.permutation(n)
        n_val = int(round(n * val_fraction))
        val_ids.update(int(i) for i in perm[:n_val])

    if not val_ids or len(val_ids) == n:
        raise InvariantError("val_fraction yields an empty split")

    records = []
    for i, sample in enumerate(samples):
        split = "val" if i in val_ids else "train"
        records.append(
            SampleRecord(
                id=sample.id,
                split=split,
                stack_path=f"samples/{sample.id}.stack.brf",
                mask_path=f"samples/{sample.id}.mask.brf",
                provenance=sample.provenance,
                has_plume=sample.has_plume,
            )
        )
    ids = [r.id for r in records]
    if len(ids) != len(set(ids)):
        raise InvariantError("duplicate sample ids; check scene ids and origins")
    return Manifest(
        dataset_id=dataset_id, seed=seed, config_hash=config_hash, records=records
    )


# ---------------------------------------------------------------------------
# Build pipeline (CLI-facing)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetBuildConfig:
    dataset_id: str
    inputs: tuple[tuple[str, str, str], ...]  # (scene_id, stack_path, mask_path)
    tile_px: int
    stride_px: int
    augment_ops: tuple[str, ...] = ()
    val_fraction: float = 0.2
    stratify: bool = False
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "inputs": [
                {"scene_id": sid, "stack": sp, "mask": mp}
                for sid, sp, mp in self.inputs
            ],
            "tile_px": self.tile_px,
            "stride_px": self.stride_px,
            "augment": list(self.augment_ops),
            "val_fraction": self.val_fraction,
            "stratify": self.stratify,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetBuildConfig":
        return cls(
            dataset_id=obj["dataset_id"],
            inputs=tuple(
                (i["scene_id"], i["stack"], i["mask"]) for i in obj["inputs"]
            ),
            tile_px=int(obj["tile_px"]),
            stride_px=int(obj["stride_px"]),
            augment_ops=tuple(obj.get("augment", [])),
            val_fraction=float(obj.get("val_fraction", 0.2)),
            stratify=bool(obj.get("stratify", False)),
            seed=int(obj.get("seed", 0)),
        )


def config_hash(cfg: DatasetBuildConfig) -> str:
    canon = json.dumps(cfg.to_json(), sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canon.encode()).hexdigest()


def build_dataset(cfg: DatasetBuildConfig, out_dir, base_dir=None, jobs: int = 1) -> Manifest:
    """Tile, augment, split and write a dataset directory + manifest.json.

    Input paths resolve against ``base_dir`` (default cwd). Tiling runs per
    input scene, optionally in parallel; sample order is input order then
    raster order, independent of ``jobs``.
    """
    base = Path(base_dir) if base_dir else Path(".")
    out = Path(out_dir)
    (out / "samples").mkdir(parents=True, exist_ok=True)

    def load_and_tile(entry):
        scene_id, stack_path, mask_path = entry
        stack = read_brf(base / stack_path)
        mask = read_brf(base / mask_path)
        if not isinstance(stack, FeatureStack):
            raise PlumekitError(f"{stack_path} is not a feature stack")
        if not isinstance(mask, Mask):
            raise PlumekitError(f"{mask_path} is not a mask")
        return tile(stack, mask, cfg.tile_px, cfg.stride_px, scene_id=scene_id, seed=cfg.seed)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_scene = list(pool.map(load_and_tile, cfg.inputs))
    else:
        per_scene = [load_and_tile(entry) for entry in cfg.inputs]

    base_samples = [s for group in per_scene for s in group]
    samples = list(base_samples)
    for op in cfg.augment_ops:
        samples += [augment(s, op) for s in base_samples]

    manifest = split_manifest(
        samples,
        cfg.val_fraction,
        cfg.seed,
        stratify=cfg.stratify,
        dataset_id=cfg.dataset_id,
        config_hash=config_hash(cfg),
    )
    by_id = {s.id: s for s in samples}
    for record in manifest.records:
        sample = by_id[record.id]
        write_brf(sample.stack, out / record.stack_path)
        write_brf(sample.mask, out / record.mask_path)
    manifest.validate_files(out)
    manifest.save(out / "manifest.json")
    return manifest
