"""3D decoder: query self-attention, prototype cross-attention, and
projection-guided deformable attention over every tilt.

Each layer projects the current 3D anchors onto every tilt with the shared
forward model, samples that tilt's features around the projection, and
averages the result over the tilts whose projection lands inside the image.
Anchors are refined through residual logits with the two-step supervision
chain: a layer's box loss also reaches the previous layer's head, while the
anchors feeding attention use detached values.
"""

from __future__ import annotations

import torch
from torch import nn

from ..geometry import TomogramDims
from .config import ModelConfig
from .layers import MLP, DeformableAttention, sine_embedding


def project_anchors_to_tilt(
    anchors_sig: torch.Tensor, cos_t: torch.Tensor, sin_t: torch.Tensor, dims: TomogramDims
) -> tuple[torch.Tensor, torch.Tensor]:
    """Normalized anchors (Q, 4) -> per-tilt projected x (T, Q), validity (T, Q).

    Unnormalize to pixels, apply the single-axis projection, renormalize.
    y passes through unchanged. A tilt is invalid for a query when the
    projected x leaves [0, 1].
    """
    x_pix = anchors_sig[:, 0] * dims.w
    z_pix = anchors_sig[:, 2] * dims.d
    xc = x_pix - dims.w / 2.0
    zc = z_pix - dims.d / 2.0
    x_proj = xc[None, :] * cos_t[:, None] + zc[None, :] * sin_t[:, None] + dims.w / 2.0
    x_norm = x_proj / dims.w
    valid = (x_norm >= 0.0) & (x_norm <= 1.0)
    return x_norm, valid


class AnchorPositionEncoding(nn.Module):
    """Sine-embed all four anchor dims and fuse to C."""

    def __init__(self, c: int):
        super().__init__()
        self.mlp = MLP(2 * c, c, c, 2)
        self.c = c

    def forward(self, anchors_sig: torch.Tensor) -> torch.Tensor:
        parts = [sine_embedding(anchors_sig[:, i], self.c // 2) for i in range(4)]
        return self.mlp(torch.cat(parts, dim=-1))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        c, ffn = cfg.c, cfg.c * cfg.ffn_ratio
        self.n_heads = cfg.n_heads
        self.anchor_pos = AnchorPositionEncoding(c)
        self.self_attn = nn.MultiheadAttention(c, cfg.n_heads, batch_first=True)
        self.norm_self = nn.LayerNorm(c)
        self.proto_attn = nn.MultiheadAttention(c, cfg.n_heads, batch_first=True)
        self.norm_proto = nn.LayerNorm(c)
        self.deform = DeformableAttention(c, cfg.n_heads, cfg.n_levels, cfg.n_points)
        self.norm_deform = nn.LayerNorm(c)
        self.ffn = nn.Sequential(nn.Linear(c, ffn), nn.ReLU(), nn.Linear(ffn, c))
        self.norm_ffn = nn.LayerNorm(c)

    def forward(
        self,
        content: torch.Tensor,
        anchors_sig: torch.Tensor,
        prototypes: torch.Tensor,
        feats: list[torch.Tensor],
        cos_t: torch.Tensor,
        sin_t: torch.Tensor,
        dims: TomogramDims,
        self_attn_mask: torch.Tensor | None = None,
        tilt_embeds: torch.Tensor | None = None,
    ) -> torch.Tensor:
        q_total = content.shape[0]
        pos = self.anchor_pos(anchors_sig)

        qk = (content + pos).unsqueeze(0)
        mask = None
        if self_attn_mask is not None:
            mask = (~self_attn_mask).repeat(self.n_heads, 1, 1)
        attended, _ = self.self_attn(qk, qk, content.unsqueeze(0), attn_mask=mask, need_weights=False)
        x = self.norm_self(content + attended.squeeze(0))

        proto_out, _ = self.proto_attn(x.unsqueeze(0), prototypes.unsqueeze(0), prototypes.unsqueeze(0),
                                       need_weights=False)
        x = self.norm_proto(x + proto_out.squeeze(0))

        n_tilts = feats[0].shape[0]
        x_norm, valid = project_anchors_to_tilt(anchors_sig, cos_t, sin_t, dims)
        aspect = dims.w / dims.h
        refs = torch.stack(
            [
                x_norm,
                anchors_sig[None, :, 1].expand(n_tilts, q_total),
                anchors_sig[None, :, 3].expand(n_tilts, q_total),
                anchors_sig[None, :, 3].expand(n_tilts, q_total) * aspect,
            ],
            dim=-1,
        )
        # duplicated queries receive their tilt's angle embedding so the
        # sampling offsets can depend on the view; without it a depth error
        # produces the same (sign-blind) smear in every tilt's average
        tiled = x.unsqueeze(0).expand(n_tilts, q_total, -1)
        if tilt_embeds is not None:
            tiled = tiled + tilt_embeds[:, None, :]
        sampled = self.deform(tiled, refs, feats)  # (T, Q, C)
        weights = valid.to(sampled.dtype).unsqueeze(-1)
        counts = weights.sum(dim=0).clamp_min(1.0)
        pooled = (sampled * weights).sum(dim=0) / counts
        x = self.norm_deform(x + pooled)

        x = self.norm_ffn(x + self.ffn(x))
        return x


class ScoreHead(nn.Module):
    """Open-set classification: inner product with the prototypes plus a
    single learned scalar bias, per-class sigmoid downstream."""

    def __init__(self):
        super().__init__()
        self.bias = nn.Parameter(torch.tensor(-2.0))

    def forward(self, content: torch.Tensor, prototypes: torch.Tensor) -> torch.Tensor:
        return content @ prototypes.t() + self.bias


class BoxRefineHead(nn.Module):
    """Residual logits on the four anchor dims; zero-initialized."""

    def __init__(self, c: int):
        super().__init__()
        self.mlp = MLP(c, c, 4, 3)
        nn.init.constant_(self.mlp.layers[-1].weight, 0.0)
        nn.init.constant_(self.mlp.layers[-1].bias, 0.0)

    def forward(self, content: torch.Tensor) -> torch.Tensor:
        return self.mlp(content)
