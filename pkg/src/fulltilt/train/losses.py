"""Set-prediction losses: matched L1 box regression plus sigmoid focal
classification, applied per decoder layer with fresh matching, with
auxiliary supervision for the encoder box head and denoising queries."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .matcher import MatchCostConfig, match_hungarian


@dataclass(frozen=True)
class LossConfig:
    w_box: float = 5.0
    w_cls: float = 2.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    aux_weight: float = 1.0  # non-final decoder layers
    enc_weight: float = 1.0  # encoder box head at the nearest-zero tilt
    dn_weight: float = 1.0  # denoising groups


@dataclass
class TrainingTargets:
    """Supervision for one scene, everything normalized to the unit cube.

    ``boxes3d``: (G, 4) as (x/W, y/H, z/D, d/W); ``class_idx``: (G,) indices
    into the ascending prompt-class list; ``boxes2d_star``: (G, 4) the gt
    particles projected onto the nearest-zero tilt as (x, y, d, d).
    """

    boxes3d: torch.Tensor
    class_idx: torch.Tensor
    boxes2d_star: torch.Tensor


@dataclass
class DenoisingTargets:
    boxes: torch.Tensor  # (D, 4) origin gt box per dn query
    class_idx: torch.Tensor  # (D,) true class index
    positive: torch.Tensor  # (D,) bool; negatives are supervised as background


def sigmoid_focal_loss(logits: torch.Tensor, targets: torch.Tensor,
                       alpha: float, gamma: float) -> torch.Tensor:
    """Elementwise focal loss on logits against {0,1} targets."""
    prob = logits.sigmoid()
    ce = F.binary_cross_entropy_with_logits(logits, targets, reduction="none")
    p_t = prob * targets + (1 - prob) * (1 - targets)
    loss = ce * ((1 - p_t) ** gamma)
    if alpha >= 0:
        loss = loss * (alpha * targets + (1 - alpha) * (1 - targets))
    return loss


def _set_loss(boxes, logits, targets: TrainingTargets, match_cfg: MatchCostConfig,
              cfg: LossConfig, box_dims: int = 4, assign: torch.Tensor | None = None):
    """Matched L1 + focal for one output set; ``assign`` freezes the matching
    (used by gradient checks), otherwise it is recomputed here."""
    g = targets.boxes3d.shape[0] if box_dims == 4 else targets.boxes2d_star.shape[0]
    gt_boxes = targets.boxes3d if box_dims == 4 else targets.boxes2d_star
    norm = max(g, 1)
    onehot = torch.zeros_like(logits)
    if g > 0:
        if assign is None:
            assign = match_hungarian(boxes.detach(), logits.detach(), gt_boxes,
                                     targets.class_idx, match_cfg)
        matched = boxes[assign]
        l1 = (matched - gt_boxes).abs().sum() / norm
        onehot[assign, targets.class_idx] = 1.0
    else:
        l1 = boxes.sum() * 0.0
    focal = sigmoid_focal_loss(logits, onehot, cfg.focal_alpha, cfg.focal_gamma).sum() / norm
    return l1, focal


def _dn_loss(boxes, logits, dn_targets: DenoisingTargets, cfg: LossConfig):
    pos = dn_targets.positive
    norm = max(int(pos.sum()), 1)
    l1 = (boxes[pos] - dn_targets.boxes[pos]).abs().sum() / norm
    onehot = torch.zeros_like(logits)
    idx = torch.nonzero(pos, as_tuple=True)[0]
    onehot[idx, dn_targets.class_idx[pos]] = 1.0
    focal = sigmoid_focal_loss(logits, onehot, cfg.focal_alpha, cfg.focal_gamma).sum() / norm
    return l1, focal


def compute_assignments(output: dict, targets: TrainingTargets,
                        match_cfg: MatchCostConfig) -> dict:
    """Per-layer and encoder matchings, frozen for gradient checks."""
    frozen = {"layers": [], "enc": None}
    if targets.boxes3d.shape[0] == 0:
        return frozen
    for boxes, logits in output["layers"]:
        frozen["layers"].append(
            match_hungarian(boxes.detach(), logits.detach(), targets.boxes3d,
                            targets.class_idx, match_cfg)
        )
    frozen["enc"] = match_hungarian(
        output["enc_boxes"].detach(), output["enc_logits"].detach(),
        targets.boxes2d_star, targets.class_idx, match_cfg,
    )
    return frozen


def loss_total(
    output: dict,
    targets: TrainingTargets,
    match_cfg: MatchCostConfig,
    cfg: LossConfig,
    dn_targets: DenoisingTargets | None = None,
    frozen_assignments: dict | None = None,
) -> tuple[torch.Tensor, dict]:
    """Weighted total over decoder layers (fresh matching each), the encoder
    box head, and denoising queries. Returns (scalar, components)."""
    components: dict[str, float] = {}
    total = None
    fa = frozen_assignments

    n_layers = len(output["layers"])
    for li, (boxes, logits) in enumerate(output["layers"]):
        assign = fa["layers"][li] if fa and fa["layers"] else None
        l1, focal = _set_loss(boxes, logits, targets, match_cfg, cfg, assign=assign)
        layer_loss = cfg.w_box * l1 + cfg.w_cls * focal
        weight = 1.0 if li == n_layers - 1 else cfg.aux_weight
        total = layer_loss * weight if total is None else total + layer_loss * weight
        if li == n_layers - 1:
            components["box"] = float(l1.detach())
            components["cls"] = float(focal.detach())

    enc_l1, enc_focal = _set_loss(output["enc_boxes"], output["enc_logits"], targets,
                                  match_cfg, cfg, box_dims=2,
                                  assign=fa["enc"] if fa else None)
    enc_loss = cfg.w_box * enc_l1 + cfg.w_cls * enc_focal
    total = total + cfg.enc_weight * enc_loss
    components["enc"] = float(enc_loss.detach())

    if dn_targets is not None and output.get("dn_layers"):
        dn_total = None
        for boxes, logits in output["dn_layers"]:
            l1, focal = _dn_loss(boxes, logits, dn_targets, cfg)
            piece = cfg.w_box * l1 + cfg.w_cls * focal
            dn_total = piece if dn_total is None else dn_total + piece
        total = total + cfg.dn_weight * dn_total
        components["dn"] = float(dn_total.detach())

    components["total"] = float(total.detach())
    return total, components


def matched_l1(output: dict, targets: TrainingTargets, match_cfg: MatchCostConfig) -> float:
    """Final-layer matched L1 per ground-truth box (normalized units)."""
    boxes, logits = output["layers"][-1]
    g = targets.boxes3d.shape[0]
    if g == 0:
        return 0.0
    assign = match_hungarian(boxes.detach(), logits.detach(), targets.boxes3d,
                             targets.class_idx, match_cfg)
    return float((boxes.detach()[assign] - targets.boxes3d).abs().sum() / g)
