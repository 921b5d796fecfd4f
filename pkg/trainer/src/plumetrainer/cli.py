"""Trainer CLI: train | predict | grid, all config-file driven."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .train import TrainConfig, grid_search, predict, train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plume-trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model from a config file")
    p.add_argument("--config", required=True, help="TrainConfig JSON")
    p.add_argument("--out", default=None, help="override out_dir")

    p = sub.add_parser("predict", help="write prediction BRFs for a manifest split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=["val", "train", "all"], default="val")

    p = sub.add_parser("grid", help="loss-weight grid search")
    p.add_argument("--config", required=True,
                   help='JSON: {"base": TrainConfig, "grid": {axis: [values]}}')
    p.add_argument("--out-csv", default=None)

    return parser


def run(argv) -> int:
    args = _build_parser().parse_args(list(argv))
    if args.command == "train":
        cfg = TrainConfig.from_json(json.loads(Path(args.config).read_text()))
        if args.out:
            from dataclasses import replace

            cfg = replace(cfg, out_dir=args.out)
        history = train(cfg)
        best = history.epochs[history.best_epoch]
        print(f"best epoch {best.epoch}: val dice {best.val_dice:.4f} "
              f"iou {best.val_iou:.4f} ({history.checkpoint})")
    elif args.command == "predict":
        written = predict(args.checkpoint, args.manifest, args.out, split=args.split)
        print(f"wrote predictions for {len(written)} samples to {args.out}")
    else:
        obj = json.loads(Path(args.config).read_text())
        base = TrainConfig.from_json(obj["base"])
        out_csv = args.out_csv or str(Path(base.out_dir) / "grid_results.csv")
        Path(base.out_dir).mkdir(parents=True, exist_ok=True)
        best_cfg, rows = grid_search(base, obj.get("grid", {}), out_csv=out_csv)
        print(f"{len(rows)} runs; best val dice {rows[0]['val_dice']:.4f} "
              f"(alpha={rows[0]['alpha']}, gamma={rows[0]['gamma']}, "
              f"lf={rows[0]['lambda_focal']}, ld={rows[0]['lambda_dice']}) -> {out_csv}")
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
