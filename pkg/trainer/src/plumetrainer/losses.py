"""Focal + Dice training loss, numerically matching the scoring toolkit.

The scoring side publishes reference values for these exact formulas
(probability clamp 1e-7, soft-Dice smoothing eps); keeping the arithmetic
identical is what makes loss values cross-checkable between the trainer
and the evaluation pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LossConfig:
    """Schema shared with the evaluation toolkit's reference losses."""

    alpha: float = 0.25
    gamma: float = 2.0
    lambda_focal: float = 1.0
    lambda_dice: float = 1.0
    dice_eps: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.gamma < 0 or self.lambda_focal < 0 or self.lambda_dice < 0:
            raise ValueError("gamma and loss weights must be >= 0")
        if self.lambda_focal + self.lambda_dice <= 0:
            raise ValueError("at least one loss weight must be positive")
        if self.dice_eps <= 0:
            raise ValueError("dice_eps must be > 0")

    @classmethod
    def from_json(cls, obj: dict) -> "LossConfig":
        return cls(
            alpha=float(obj.get("alpha", 0.25)),
            gamma=float(obj.get("gamma", 2.0)),
            lambda_focal=float(obj.get("lambda_focal", 1.0)),
            lambda_dice=float(obj.get("lambda_dice", 1.0)),
            dice_eps=float(obj.get("dice_eps", 1.0)),
        )

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "gamma": self.gamma,
            "lambda_focal": self.lambda_focal,
            "lambda_dice": self.lambda_dice,
            "dice_eps": self.dice_eps,
        }


def focal_loss(probs: torch.Tensor, target: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    """Mean of -alpha * (1 - p_t)^gamma * ln(p_t) over all pixels."""
    p = probs.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    p_t = p * target + (1.0 - p) * (1.0 - target)
    return (-cfg.alpha * (1.0 - p_t).pow(cfg.gamma) * p_t.log()).mean()


def dice_loss(probs: torch.Tensor, target: torch.Tensor, eps: float) -> torch.Tensor:
    """Soft Dice over the whole batch: 1 - (2*sum(pg)+eps)/(sum(p)+sum(g)+eps)."""
    inter = (probs * target).sum()
    return 1.0 - (2.0 * inter + eps) / (probs.sum() + target.sum() + eps)


def combined_loss(probs: torch.Tensor, target: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    return cfg.lambda_focal * focal_loss(probs, target, cfg) + cfg.lambda_dice * dice_loss(
        probs, target, cfg.dice_eps
    )
