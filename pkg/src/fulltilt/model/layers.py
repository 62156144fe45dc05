"""Shared building blocks: MLPs, positional/tilt embeddings, attention blocks,
and multi-level deformable attention."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


class MLP(nn.Module):
    def __init__(self, in_dim, hidden_dim, out_dim, n_layers):
        super().__init__()
        dims = [in_dim] + [hidden_dim] * (n_layers - 1) + [out_dim]
        self.layers = nn.ModuleList(nn.Linear(a, b) for a, b in zip(dims, dims[1:]))

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.relu(x)
        return x


def sine_embedding(values: torch.Tensor, num_channels: int, temperature: float = 10000.0) -> torch.Tensor:
    """Classic transformer sine/cosine embedding of scalars in [0, 1].

    Returns (..., num_channels): interleaved sin/cos over num_channels/2
    geometric frequencies.
    """
    half = num_channels // 2
    k = torch.arange(half, device=values.device, dtype=values.dtype)
    inv_freq = temperature ** (-k / half)
    ang = values.unsqueeze(-1) * (2 * math.pi) * inv_freq
    return torch.cat([ang.sin(), ang.cos()], dim=-1)


def position_embedding_2d(h: int, w: int, c: int, device, dtype) -> torch.Tensor:
    """(C, H, W) sine embedding of normalized pixel-center coordinates."""
    ys = (torch.arange(h, device=device, dtype=dtype) + 0.5) / h
    xs = (torch.arange(w, device=device, dtype=dtype) + 0.5) / w
    ey = sine_embedding(ys, c // 2)  # (H, C/2)
    ex = sine_embedding(xs, c // 2)  # (W, C/2)
    pos = torch.cat(
        [
            ey[:, None, :].expand(h, w, c // 2),
            ex[None, :, :].expand(h, w, c // 2),
        ],
        dim=-1,
    )
    return pos.permute(2, 0, 1)


class TiltEmbedding(nn.Module):
    """Angle embedding: sin/cos at frequencies 2^(8k/(C/2-1)) over the angle in
    radians, pushed through a two-layer MLP."""

    def __init__(self, c: int):
        super().__init__()
        if c < 4 or c % 2 != 0:
            raise ValueError("tilt embedding needs even c >= 4")
        half = c // 2
        k = torch.arange(half, dtype=torch.float64)
        self.register_buffer("freqs", (2.0 ** (8.0 * k / (half - 1))).to(torch.float32))
        self.mlp = nn.Sequential(nn.Linear(c, c), nn.ReLU(), nn.Linear(c, c))

    def features(self, theta_deg: torch.Tensor) -> torch.Tensor:
        """Pre-MLP feature vector [sin(theta*w_k)..., cos(theta*w_k)...]."""
        theta = torch.deg2rad(theta_deg).unsqueeze(-1)
        freqs = self.freqs.to(theta.dtype)
        ang = theta * freqs
        return torch.cat([ang.sin(), ang.cos()], dim=-1)

    def forward(self, theta_deg: torch.Tensor) -> torch.Tensor:
        return self.mlp(self.features(theta_deg))


class SelfAttentionBlock(nn.Module):
    """Pre-norm transformer block with zero-initialized residual branches:
    starts as the identity, so stacking layers cannot hurt an untrained
    model (there is no warmup schedule to recover from a bad start)."""

    def __init__(self, c: int, n_heads: int, ffn_dim: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(c)
        self.attn = nn.MultiheadAttention(c, n_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(c)
        self.ffn = nn.Sequential(nn.Linear(c, ffn_dim), nn.ReLU(), nn.Linear(ffn_dim, c))
        nn.init.constant_(self.attn.out_proj.weight, 0.0)
        nn.init.constant_(self.attn.out_proj.bias, 0.0)
        nn.init.constant_(self.ffn[-1].weight, 0.0)
        nn.init.constant_(self.ffn[-1].bias, 0.0)

    def forward(self, x: torch.Tensor, attn_mask: torch.Tensor | None = None,
                query_pos: torch.Tensor | None = None) -> torch.Tensor:
        h = self.norm1(x)
        q = k = h if query_pos is None else h + query_pos
        attended, _ = self.attn(q, k, h, attn_mask=attn_mask, need_weights=False)
        x = x + attended
        x = x + self.ffn(self.norm2(x))
        return x


class CrossAttentionBlock(nn.Module):
    def __init__(self, c: int, n_heads: int):
        super().__init__()
        self.attn = nn.MultiheadAttention(c, n_heads, batch_first=True)
        self.norm = nn.LayerNorm(c)

    def forward(self, x: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        attended, _ = self.attn(x, memory, memory, need_weights=False)
        return self.norm(x + attended)


class DeformableAttention(nn.Module):
    """Multi-level deformable attention with bilinear sampling.

    Sampling offsets and weights are predicted from the query; reference
    points are normalized (x, y) centers, optionally with a (w, h) extent
    that scales the offsets. Locations are clamped to the feature extent.
    """

    def __init__(self, c: int, n_heads: int, n_levels: int, n_points: int):
        super().__init__()
        if c % n_heads != 0:
            raise ValueError("c must divide into heads")
        self.c, self.n_heads, self.n_levels, self.n_points = c, n_heads, n_levels, n_points
        self.value_proj = nn.Linear(c, c)
        self.offset_head = nn.Linear(c, n_heads * n_levels * n_points * 2)
        self.weight_head = nn.Linear(c, n_heads * n_levels * n_points)
        self.out_proj = nn.Linear(c, c)
        self._reset_parameters()

    def _reset_parameters(self):
        nn.init.constant_(self.offset_head.weight, 0.0)
        # spread initial sampling points on a small ring, one direction per head
        angles = torch.arange(self.n_heads, dtype=torch.float32) * (2 * math.pi / self.n_heads)
        base = torch.stack([angles.cos(), angles.sin()], dim=-1)  # (heads, 2)
        base = base / base.abs().max(-1, keepdim=True).values
        grid = base[:, None, None, :].repeat(1, self.n_levels, self.n_points, 1)
        for p in range(self.n_points):
            grid[:, :, p, :] *= p + 1
        with torch.no_grad():
            self.offset_head.bias.copy_(grid.reshape(-1))
        nn.init.constant_(self.weight_head.weight, 0.0)
        nn.init.constant_(self.weight_head.bias, 0.0)
        nn.init.xavier_uniform_(self.value_proj.weight)
        nn.init.constant_(self.value_proj.bias, 0.0)
        nn.init.xavier_uniform_(self.out_proj.weight)
        nn.init.constant_(self.out_proj.bias, 0.0)

    def forward(self, query: torch.Tensor, ref_points: torch.Tensor,
                value_levels: list[torch.Tensor]) -> torch.Tensor:
        """query (B, Lq, C); ref_points (B, Lq, 2) or (B, Lq, 4) normalized;
        value_levels: one (B, C, H_l, W_l) per level."""
        b, lq, _ = query.shape
        h, lv, p = self.n_heads, self.n_levels, self.n_points
        head_dim = self.c // h

        offsets = self.offset_head(query).view(b, lq, h, lv, p, 2)
        weights = self.weight_head(query).view(b, lq, h, lv * p)
        weights = weights.softmax(-1).view(b, lq, h, lv, p)

        if ref_points.shape[-1] == 4:
            centers = ref_points[..., :2].view(b, lq, 1, 1, 1, 2)
            extent = ref_points[..., 2:].view(b, lq, 1, 1, 1, 2)
            locations = centers + offsets / p * extent * 0.5
        else:
            shapes = query.new_tensor([[vl.shape[-1], vl.shape[-2]] for vl in value_levels])
            centers = ref_points.view(b, lq, 1, 1, 1, 2)
            locations = centers + offsets / shapes.view(1, 1, 1, lv, 1, 2)

        collected = []
        for l, vl in enumerate(value_levels):
            hl, wl = vl.shape[-2], vl.shape[-1]
            value = self.value_proj(vl.flatten(2).transpose(1, 2))  # (B, H*W, C)
            value = value.view(b, hl * wl, h, head_dim).permute(0, 2, 3, 1)
            value = value.reshape(b * h, head_dim, hl, wl)
            loc = locations[:, :, :, l]  # (B, Lq, heads, points, 2)
            lo = query.new_tensor([0.5 / wl, 0.5 / hl])
            hi = query.new_tensor([1 - 0.5 / wl, 1 - 0.5 / hl])
            loc = torch.clamp(loc, min=lo, max=hi)
            grid = loc.permute(0, 2, 1, 3, 4).reshape(b * h, lq, p, 2) * 2 - 1
            sampled = F.grid_sample(value, grid, mode="bilinear", padding_mode="border",
                                    align_corners=False)  # (B*h, head_dim, Lq, points)
            collected.append(sampled.view(b, h, head_dim, lq, self.n_points))
        stacked = torch.stack(collected, dim=3)  # (B, h, head_dim, levels, Lq, points)
        w = weights.permute(0, 2, 3, 1, 4)[:, :, None]  # (B, h, 1, levels, Lq, points)
        fused = (stacked * w).sum(dim=(3, 5))  # (B, h, head_dim, Lq)
        fused = fused.permute(0, 3, 1, 2).reshape(b, lq, self.c)
        return self.out_proj(fused)
