"""Bipartite matching between predictions and ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class MatchCostConfig:
    w_cls: float = 2.0
    w_box: float = 5.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0

    def __post_init__(self):
        if self.w_cls < 0 or self.w_box < 0 or (self.w_cls == 0 and self.w_box == 0):
            raise ValueError("cost weights must be non-negative and not all zero")


def focal_match_cost(logits: torch.Tensor, cfg: MatchCostConfig) -> torch.Tensor:
    """Per (prediction, class) classification cost on sigmoid probabilities:
    positive focal term minus negative focal term, as in set-prediction
    matchers for sigmoid heads."""
    prob = logits.sigmoid()
    alpha, gamma = cfg.focal_alpha, cfg.focal_gamma
    pos = alpha * ((1 - prob) ** gamma) * (-(prob + 1e-8).log())
    neg = (1 - alpha) * (prob**gamma) * (-(1 - prob + 1e-8).log())
    return pos - neg


def match_hungarian(
    pred_boxes: torch.Tensor,
    pred_logits: torch.Tensor,
    gt_boxes: torch.Tensor,
    gt_class_idx: torch.Tensor,
    cfg: MatchCostConfig,
) -> torch.Tensor:
    """Globally optimal injective assignment gt -> prediction.

    Returns a (G,) long tensor of prediction indices, one per ground-truth
    row. Cost per pair is w_cls * focal-style cost on the gt class plus
    w_box * L1 box distance. Requires G <= M.
    """
    g = gt_boxes.shape[0]
    m = pred_boxes.shape[0]
    if g > m:
        raise ValueError(f"{g} ground-truth boxes exceed {m} predictions")
    if g == 0:
        return torch.zeros(0, dtype=torch.long)
    with torch.no_grad():
        cls_cost = focal_match_cost(pred_logits, cfg)[:, gt_class_idx]  # (M, G)
        box_cost = torch.cdist(pred_boxes, gt_boxes, p=1)  # (M, G)
        cost = (cfg.w_cls * cls_cost + cfg.w_box * box_cost).cpu().numpy()
    rows, cols = linear_sum_assignment(cost.T)  # rows over gt, cols over preds
    out = torch.zeros(g, dtype=torch.long)
    out[torch.from_numpy(rows)] = torch.from_numpy(cols)
    return out
