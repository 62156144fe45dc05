"""Tilt-series encoder: alternating local and global row attention.

Every token first receives its 2D positional, level, and tilt-angle
embeddings. Each layer then runs full self-attention within every tilt
(local) followed by self-attention along each image row across all tilts
(global row attention). Because the series is aligned along y, a particle
stays on the same row in every view, so row-restricted attention suffices
for cross-view fusion at a fraction of full attention's cost.

Layer weights are shared across tilts and levels; levels are processed
independently (row lengths differ between levels).
"""

from __future__ import annotations

import torch
from torch import nn

from .config import ModelConfig
from .layers import SelfAttentionBlock, TiltEmbedding, position_embedding_2d


class LocalAttention(nn.Module):
    """Full self-attention over one tilt's H*W tokens (batched over tilts)."""

    def __init__(self, c, n_heads, ffn_dim):
        super().__init__()
        self.block = SelfAttentionBlock(c, n_heads, ffn_dim)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        n, c, h, w = feats.shape
        tokens = feats.flatten(2).transpose(1, 2)  # (N, H*W, C)
        tokens = self.block(tokens)
        return tokens.transpose(1, 2).view(n, c, h, w)


class GlobalRowAttention(nn.Module):
    """Self-attention over {(tilt, column)} token sets, one row at a time."""

    def __init__(self, c, n_heads, ffn_dim):
        super().__init__()
        self.block = SelfAttentionBlock(c, n_heads, ffn_dim)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        n, c, h, w = feats.shape
        rows = feats.permute(2, 0, 3, 1).reshape(h, n * w, c)  # (H, N*W, C)
        rows = self.block(rows)
        return rows.view(h, n, w, c).permute(1, 3, 0, 2)


class AlternatingAttentionLayer(nn.Module):
    def __init__(self, c, n_heads, ffn_dim):
        super().__init__()
        self.local = LocalAttention(c, n_heads, ffn_dim)
        self.global_row = GlobalRowAttention(c, n_heads, ffn_dim)

    def forward(self, levels: list[torch.Tensor]) -> list[torch.Tensor]:
        return [self.global_row(self.local(x)) for x in levels]


class TiltSeriesEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.tilt_embed = TiltEmbedding(cfg.c)
        self.level_embed = nn.Parameter(torch.zeros(cfg.n_levels, cfg.c))
        nn.init.normal_(self.level_embed, std=0.02)
        n_layers = cfg.l_aa if cfg.enable_tilt_encoder else 0
        ffn = cfg.c * cfg.ffn_ratio
        self.layers = nn.ModuleList(
            AlternatingAttentionLayer(cfg.c, cfg.n_heads, ffn) for _ in range(n_layers)
        )

    def embed(self, pyramid: list[torch.Tensor], angles_deg: torch.Tensor) -> list[torch.Tensor]:
        te = self.tilt_embed(angles_deg)  # (N, C)
        out = []
        for l, feats in enumerate(pyramid):
            n, c, h, w = feats.shape
            pos = position_embedding_2d(h, w, c, feats.device, feats.dtype)
            out.append(feats + pos.unsqueeze(0) + self.level_embed[l].view(1, c, 1, 1) + te.view(n, c, 1, 1))
        return out

    def forward(self, pyramid: list[torch.Tensor], angles_deg: torch.Tensor) -> list[torch.Tensor]:
        levels = self.embed(pyramid, angles_deg)
        for layer in self.layers:
            levels = layer(levels)
        return levels
