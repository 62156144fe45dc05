"""Multiclass visual prompt encoder.

Per tilt, local prompt boxes are padded to a common slot count with empty
tokens, the unique class labels are appended as global slots, and a masked
self-attention restricted to identical non-empty labels routes information
from prompt slots into their class slots. Class slots are averaged across
the tilts that contain prompts of that class after every layer; the final
class slots are the per-class prototypes.

The learned slot seeds are shared across slots (one content seed, one class
seed), so outputs are invariant to prompt order within a tilt and to the
number of padding slots.
"""

from __future__ import annotations

import torch
from torch import nn

from .config import ModelConfig
from .layers import MLP, CrossAttentionBlock, DeformableAttention

EMPTY = 0  # label value for the padding token

GLOBAL_BOX = (0.5, 0.5, 1.0, 1.0)


def mask_from_labels(labels: torch.Tensor) -> torch.Tensor:
    """Attention permission matrix for one label vector.

    ``labels``: (S,) integer tensor, 0 marking the empty token. Entry (r, c)
    permits attention iff labels match and are non-empty; the diagonal is
    always permitted so every softmax row stays defined.
    """
    same = labels.unsqueeze(0) == labels.unsqueeze(1)
    valid = labels != EMPTY
    allowed = same & valid.unsqueeze(0) & valid.unsqueeze(1)
    allowed |= torch.eye(len(labels), dtype=torch.bool, device=labels.device)
    return allowed


def build_prompt_state(
    labels_per_tilt: list[list[int]],
    unique_classes: list[int],
    n_p: int | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Label matrix V (N, Np+Nc) and permission masks A (N, S, S).

    Slots are [local labels, empty padding, global classes ascending].
    ``n_p`` overrides the slot count (>= max prompt count) to let callers
    pad further; outputs are invariant to that choice downstream.
    """
    if sorted(unique_classes) != list(unique_classes) or len(set(unique_classes)) != len(unique_classes):
        raise ValueError("unique_classes must be strictly ascending")
    known = set(unique_classes)
    max_k = max((len(ls) for ls in labels_per_tilt), default=0)
    if n_p is None:
        n_p = max_k
    if n_p < max_k:
        raise ValueError("n_p smaller than the largest prompt count")
    for ls in labels_per_tilt:
        for label in ls:
            if label not in known:
                raise ValueError(f"prompt label {label} not among requested classes {unique_classes}")

    n = len(labels_per_tilt)
    s = n_p + len(unique_classes)
    v = torch.full((n, s), EMPTY, dtype=torch.long)
    for i, ls in enumerate(labels_per_tilt):
        for k, label in enumerate(ls):
            v[i, k] = label
        v[i, n_p:] = torch.tensor(unique_classes, dtype=torch.long)
    a = torch.stack([mask_from_labels(v[i]) for i in range(n)])
    return v, a


class PromptEncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        c, ffn = cfg.c, cfg.c * cfg.ffn_ratio
        self.deform = DeformableAttention(c, cfg.n_heads, cfg.n_levels, cfg.n_points)
        self.norm_cross = nn.LayerNorm(c)
        self.self_attn = nn.MultiheadAttention(c, cfg.n_heads, batch_first=True)
        self.norm_self = nn.LayerNorm(c)
        self.ffn = nn.Sequential(nn.Linear(c, ffn), nn.ReLU(), nn.Linear(ffn, c))
        self.norm_ffn = nn.LayerNorm(c)
        self.n_heads = cfg.n_heads

    def forward(self, tokens, refs, feats, allowed):
        tokens = self.norm_cross(tokens + self.deform(tokens, refs, feats))
        block = ~allowed
        mask = block.repeat_interleave(self.n_heads, dim=0)
        attended, _ = self.self_attn(tokens, tokens, tokens, attn_mask=mask, need_weights=False)
        tokens = self.norm_self(tokens + attended)
        tokens = self.norm_ffn(tokens + self.ffn(tokens))
        return tokens


class PromptEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        c = cfg.c
        self.box_mlp = MLP(4, c, c, 2)
        self.content_seed = nn.Parameter(torch.zeros(c))
        self.class_seed = nn.Parameter(torch.zeros(c))
        nn.init.normal_(self.content_seed, std=0.02)
        nn.init.normal_(self.class_seed, std=0.02)
        self.fuse = nn.Linear(2 * c, c)
        self.layers = nn.ModuleList(PromptEncoderLayer(cfg) for _ in range(cfg.l_vp))

    def forward(
        self,
        boxes_per_tilt: list[list[tuple[float, float, float, float]]],
        labels_per_tilt: list[list[int]],
        feats: list[torch.Tensor],
        aspect: float = 1.0,
        n_p: int | None = None,
    ) -> torch.Tensor:
        """Normalized (x, y, d, d) prompt boxes per tilt -> prototypes (Nc, C).

        ``aspect`` is W/H, used to convert the width-normalized diameter into
        a y-extent for deformable sampling.
        """
        classes = sorted({l for ls in labels_per_tilt for l in ls})
        if not classes:
            raise ValueError("prompt encoder needs at least one class")
        return self.forward_with_classes(boxes_per_tilt, labels_per_tilt, classes, feats, aspect, n_p)

    def forward_with_classes(self, boxes_per_tilt, labels_per_tilt, unique_classes, feats, aspect=1.0, n_p=None):
        device = self.content_seed.device
        dtype = self.content_seed.dtype
        n = feats[0].shape[0]
        if len(boxes_per_tilt) != n or len(labels_per_tilt) != n:
            raise ValueError("prompt lists must cover every tilt")
        v, allowed = build_prompt_state(labels_per_tilt, list(unique_classes), n_p)
        v = v.to(device)
        allowed = allowed.to(device)
        n_c = len(unique_classes)
        slots = v.shape[1]
        n_pad = slots - n_c

        boxes = torch.zeros(n, slots, 4, device=device, dtype=dtype)
        for i, bs in enumerate(boxes_per_tilt):
            for k, b in enumerate(bs):
                boxes[i, k] = torch.tensor(b, device=device, dtype=dtype)
        boxes[:, n_pad:] = torch.tensor(GLOBAL_BOX, device=device, dtype=dtype)

        seeds = torch.cat(
            [
                self.content_seed.expand(n_pad, -1),
                self.class_seed.expand(n_c, -1),
            ]
        ).unsqueeze(0).expand(n, -1, -1)
        tokens = self.fuse(torch.cat([self.box_mlp(boxes), seeds], dim=-1))

        refs = torch.cat([boxes[..., :2], boxes[..., 2:3], boxes[..., 3:4] * aspect], dim=-1)

        # averaging set per class: tilts holding >= 1 prompt of it, else all
        avg_sets = []
        for label in unique_classes:
            tilts = [i for i, ls in enumerate(labels_per_tilt) if label in ls]
            avg_sets.append(tilts if tilts else list(range(n)))

        for layer in self.layers:
            tokens = layer(tokens, refs, feats, allowed)
            merged = tokens.clone()
            for j, tilts in enumerate(avg_sets):
                mean = tokens[tilts, n_pad + j].mean(dim=0)
                merged[:, n_pad + j] = mean
            tokens = merged

        if self.layers:
            return tokens[0, n_pad:]
        # degenerate zero-layer config: average the raw class slots
        protos = []
        for j, tilts in enumerate(avg_sets):
            protos.append(tokens[tilts, n_pad + j].mean(dim=0))
        return torch.stack(protos)
