"""Tilt-aware query initialization from the nearest-zero tilt's features."""

from __future__ import annotations

import torch
from torch import nn

from .config import ModelConfig
from .layers import MLP


def inverse_sigmoid(x: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    x = x.clamp(min=eps, max=1 - eps)
    return torch.log(x / (1 - x))


def level_grid(h: int, w: int, device, dtype) -> torch.Tensor:
    """(H*W, 2) normalized pixel-center coordinates in row-major scan order."""
    ys = (torch.arange(h, device=device, dtype=dtype) + 0.5) / h
    xs = (torch.arange(w, device=device, dtype=dtype) + 0.5) / w
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([gx.reshape(-1), gy.reshape(-1)], dim=-1)


class EncoderBoxHead(nn.Module):
    """Per-location 2D box (x, y, d, d): center = grid plus a sigmoid-bounded
    offset, diameter straight through a sigmoid. Zero-initialized so initial
    centers sit exactly on the grid."""

    def __init__(self, c: int):
        super().__init__()
        self.mlp = MLP(c, c, 3, 3)
        nn.init.constant_(self.mlp.layers[-1].weight, 0.0)
        nn.init.constant_(self.mlp.layers[-1].bias, 0.0)

    def forward(self, feats: torch.Tensor, grid: torch.Tensor) -> torch.Tensor:
        """feats (L, C), grid (L, 2) -> boxes (L, 4) in (0, 1)."""
        out = self.mlp(feats)
        center = torch.sigmoid(inverse_sigmoid(grid) + out[:, :2])
        d = torch.sigmoid(out[:, 2:3])
        return torch.cat([center, d, d], dim=-1)


class QueryInitializer(nn.Module):
    """Scores every location of the nearest-zero tilt against the prototypes,
    keeps the top M, and anchors queries at those 2D boxes with z = 0.5."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.box_head = EncoderBoxHead(cfg.c)
        self.content = nn.Embedding(cfg.m, cfg.c)
        nn.init.normal_(self.content.weight, std=0.02)
        gen = torch.Generator().manual_seed(cfg.seed + 7919)
        random_anchors = torch.rand(cfg.m, 4, generator=gen)
        self.register_buffer("random_anchor_logits", inverse_sigmoid(random_anchors))

    def flatten_star(self, z_star: list[torch.Tensor]) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-level (C, H_l, W_l) maps -> (L, C) features and (L, 2) grid,
        levels concatenated in order, row-major within each level."""
        feats, grids = [], []
        for zl in z_star:
            c, h, w = zl.shape
            feats.append(zl.flatten(1).transpose(0, 1))
            grids.append(level_grid(h, w, zl.device, zl.dtype))
        return torch.cat(feats), torch.cat(grids)

    def forward(self, z_star: list[torch.Tensor], prototypes: torch.Tensor, score_bias: torch.Tensor):
        feats, grid = self.flatten_star(z_star)
        n_locations = feats.shape[0]
        if self.cfg.m > n_locations:
            raise ValueError(f"m={self.cfg.m} exceeds {n_locations} available locations")
        enc_logits = feats @ prototypes.t() + score_bias
        enc_boxes = self.box_head(feats, grid)

        scores = enc_logits.max(dim=-1).values
        order = torch.sort(scores, descending=True, stable=True).indices
        top = order[: self.cfg.m]

        if self.cfg.enable_tilt_init:
            picked = enc_boxes[top]
            anchors = torch.cat(
                [
                    picked[:, 0:1],
                    picked[:, 1:2],
                    torch.full_like(picked[:, 0:1], 0.5),
                    picked[:, 2:3],
                ],
                dim=-1,
            )
            anchor_logits = inverse_sigmoid(anchors)
        else:
            anchor_logits = self.random_anchor_logits.to(feats.dtype).clone()

        return {
            "anchor_logits": anchor_logits,
            "content": self.content.weight.to(feats.dtype),
            "enc_boxes": enc_boxes,
            "enc_logits": enc_logits,
            "top_indices": top,
        }
