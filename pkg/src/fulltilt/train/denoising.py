"""Contrastive denoising queries: ground truth jittered within a noise band
(positives) or pushed into a farther band (negatives, supervised as
background), organized in mutually isolated groups."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..model.network import DenoisingQueries
from .losses import DenoisingTargets


@dataclass(frozen=True)
class DenoisingConfig:
    groups: int = 3
    box_noise_scale: float = 0.4  # positives jitter within this band
    label_flip_prob: float = 0.2
    negative_band: tuple[float, float] = (0.4, 0.8)

    def __post_init__(self):
        if self.groups < 0 or self.box_noise_scale < 0:
            raise ValueError("groups and noise scale must be non-negative")
        if not 0 <= self.label_flip_prob <= 1:
            raise ValueError("flip probability must be in [0, 1]")
        lo, hi = self.negative_band
        if lo < 0 or hi < lo:
            raise ValueError("negative band must be ordered and non-negative")


def build_denoising_queries(
    gt_boxes: torch.Tensor,
    gt_class_idx: torch.Tensor,
    n_classes: int,
    cfg: DenoisingConfig,
    rng: np.random.Generator,
) -> tuple[DenoisingQueries, DenoisingTargets] | None:
    """Per group and gt box: one positive and one negative query.

    Every coordinate (and the diameter) is shifted by s * d/2 with |s| drawn
    from [0, scale) for positives and from the negative band for negatives.
    Positive input labels flip to a random other class with the configured
    probability; supervision always targets the true class. Returns None
    when there is no ground truth or no groups.
    """
    g = gt_boxes.shape[0]
    if g == 0 or cfg.groups == 0:
        return None

    boxes, in_labels, tgt_boxes, tgt_labels, positive, sizes = [], [], [], [], [], []
    for _ in range(cfg.groups):
        for polarity in (True, False):
            for j in range(g):
                base = gt_boxes[j]
                d = float(base[3])
                if polarity:
                    s = rng.uniform(-cfg.box_noise_scale, cfg.box_noise_scale, size=4)
                else:
                    mag = rng.uniform(cfg.negative_band[0], cfg.negative_band[1], size=4)
                    s = mag * rng.choice([-1.0, 1.0], size=4)
                noised = base + torch.from_numpy(s).to(base.dtype) * (d / 2.0)
                noised = noised.clamp(1e-4, 1 - 1e-4)
                label = int(gt_class_idx[j])
                if polarity and n_classes > 1 and rng.uniform() < cfg.label_flip_prob:
                    others = [c for c in range(n_classes) if c != label]
                    label = int(rng.choice(others))
                boxes.append(noised)
                in_labels.append(label)
                tgt_boxes.append(base)
                tgt_labels.append(int(gt_class_idx[j]))
                positive.append(polarity)
        sizes.append(2 * g)

    queries = DenoisingQueries(
        boxes_sig=torch.stack(boxes),
        label_indices=torch.tensor(in_labels, dtype=torch.long),
        group_sizes=sizes,
    )
    targets = DenoisingTargets(
        boxes=torch.stack(tgt_boxes),
        class_idx=torch.tensor(tgt_labels, dtype=torch.long),
        positive=torch.tensor(positive, dtype=torch.bool),
    )
    return queries, targets
