"""Convolutional patch backbone producing a small multi-level pyramid.

Each tilt image is processed independently (no cross-tilt mixing here);
cross-view fusion is the tilt-series encoder's job.
"""

from __future__ import annotations

import torch
from torch import nn


def _gn(c: int) -> nn.GroupNorm:
    return nn.GroupNorm(8 if c % 8 == 0 else 2, c)


class ResidualBlock(nn.Module):
    def __init__(self, c: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(c, c, 3, padding=1),
            _gn(c),
            nn.GELU(),
            nn.Conv2d(c, c, 3, padding=1),
            _gn(c),
        )
        self.act = nn.GELU()

    def forward(self, x):
        return self.act(x + self.body(x))


class ConvBackbone(nn.Module):
    """Stride-4 stem plus one downsampling stage per extra level."""

    def __init__(self, c: int, strides: tuple[int, ...]):
        super().__init__()
        self.strides = strides
        mid = max(c // 2, 8)
        self.stem = nn.Sequential(
            nn.Conv2d(1, mid, 7, stride=2, padding=3),
            _gn(mid),
            nn.GELU(),
            nn.Conv2d(mid, c, 3, stride=2, padding=1),
            _gn(c),
            nn.GELU(),
            ResidualBlock(c),
        )
        self.stages = nn.ModuleList()
        for _ in strides[1:]:
            self.stages.append(
                nn.Sequential(
                    nn.Conv2d(c, c, 3, stride=2, padding=1),
                    _gn(c),
                    nn.GELU(),
                    ResidualBlock(c),
                )
            )
        self.out_projs = nn.ModuleList(
            nn.Sequential(nn.Conv2d(c, c, 1), _gn(c)) for _ in strides
        )

    def forward(self, images: torch.Tensor) -> list[torch.Tensor]:
        """images (N, H, W) or (N, 1, H, W), already normalized -> one
        (N, C, H_l, W_l) map per level."""
        if images.dim() == 3:
            images = images.unsqueeze(1)
        h, w = images.shape[-2:]
        top = self.strides[-1]
        if h % top or w % top:
            raise ValueError(f"image size {h}x{w} not divisible by stride {top}")
        x = self.stem(images)
        feats = [self.out_projs[0](x)]
        for stage, proj in zip(self.stages, self.out_projs[1:]):
            x = stage(x)
            feats.append(proj(x))
        return feats


def normalize_stack(images: torch.Tensor) -> torch.Tensor:
    """Zero-mean, unit-std over the whole stack; std clamped for flat inputs."""
    mean = images.mean()
    std = images.std().clamp_min(1e-6)
    return (images - mean) / std
